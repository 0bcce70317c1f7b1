#include "parle/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "parle/dataset.hpp"
#include "parle/error.hpp"
#include "parle/oracle.hpp"
#include "parle/persistence.hpp"
#include "parle/vector_ops.hpp"

namespace parle {

namespace {

// Streams derived from the run seeds; replica streams use indices 0..n^2.
constexpr std::uint64_t kDataStream = 0x5eed000000000001ULL;
constexpr std::uint64_t kProblemStream = 0x5eed000000000002ULL;
constexpr std::uint64_t kInitStream = 0x5eed000000000003ULL;
constexpr std::uint64_t kShardStream = 0x5eed000000000004ULL;

template <typename E>
E parse_enum(const KeyValueConfig& kv, const std::string& key, E fallback,
             std::initializer_list<std::pair<const char*, E>> names) {
  if (!kv.has(key)) return fallback;
  const std::string v = kv.get_string(key, "");
  for (const auto& [name, value] : names) {
    if (v == name) return value;
  }
  throw ConfigError(kv.origin() + ": key '" + key + "' has unsupported value '" + v + "'");
}

std::filesystem::path resolve(const KeyValueConfig& kv, const std::string& key) {
  if (!kv.has(key)) return {};
  std::filesystem::path p = kv.get_string(key, "");
  if (p.is_relative() && !kv.base_dir().empty()) p = kv.base_dir() / p;
  return p;
}

int positive_int(const KeyValueConfig& kv, const std::string& key, std::int64_t fallback) {
  const std::int64_t v = kv.get_int(key, fallback);
  if (v < 1 || v > 1'000'000'000) {
    throw ConfigError(kv.origin() + ": key '" + key + "' must be a positive integer");
  }
  return static_cast<int>(v);
}

std::size_t size_key(const KeyValueConfig& kv, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(kv.get_u64(key, fallback));
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sgd: return "sgd";
    case Algorithm::entropy_sgd: return "entropy_sgd";
    case Algorithm::elastic_sgd: return "elastic_sgd";
    case Algorithm::parle: return "parle";
    case Algorithm::sheriff: return "sheriff";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::sgd, Algorithm::entropy_sgd, Algorithm::elastic_sgd,
                      Algorithm::parle, Algorithm::sheriff}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

const std::set<std::string>& ExperimentConfig::known_keys() {
  static const std::set<std::string> keys = {
      "algorithm", "oracle", "dataset",
      "blobs_classes", "blobs_per_class", "blobs_dim", "blobs_spread",
      "train_images", "train_labels", "val_images", "val_labels", "train_csv", "val_csv",
      "train_limit", "val_limit", "val_fraction",
      "hidden", "weight_decay", "batch_size",
      "quad_dim", "quad_min_eig", "quad_max_eig", "quad_noise", "rosenbrock_dim",
      "batches_per_epoch",
      "n", "L", "alpha", "eta", "eta_prime", "eta_dprime", "gamma0", "rho0",
      "gamma_floor", "rho_floor", "momentum",
      "shard_fraction", "lr_drop_epochs", "lr_drop_factor", "init", "init_scale",
      "epochs", "seed", "data_seed", "mode"};
  return keys;
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  kv.reject_unknown(known_keys());
  ExperimentConfig c;
  c.source = kv;

  if (!kv.has("algorithm")) throw ConfigError(kv.origin() + ": missing key 'algorithm'");
  c.algorithm = parse_algorithm(kv.get_string("algorithm", ""));
  c.oracle = parse_enum(kv, "oracle", OracleKind::quadratic,
                        {{"quadratic", OracleKind::quadratic},
                         {"rosenbrock", OracleKind::rosenbrock},
                         {"mlp", OracleKind::mlp}});
  c.dataset = parse_enum(kv, "dataset", DatasetKind::blobs,
                         {{"blobs", DatasetKind::blobs}, {"idx", DatasetKind::idx}, {"csv", DatasetKind::csv}});
  c.init = parse_enum(kv, "init", InitKind::shared,
                      {{"shared", InitKind::shared}, {"independent", InitKind::independent}});
  c.mode = parse_enum(kv, "mode", ExecMode::sequential,
                      {{"sequential", ExecMode::sequential}, {"parallel", ExecMode::parallel}});

  c.blobs_classes = positive_int(kv, "blobs_classes", c.blobs_classes);
  c.blobs_per_class = positive_int(kv, "blobs_per_class", c.blobs_per_class);
  c.blobs_dim = positive_int(kv, "blobs_dim", c.blobs_dim);
  c.blobs_spread = kv.get_double("blobs_spread", c.blobs_spread);

  c.train_images = resolve(kv, "train_images");
  c.train_labels = resolve(kv, "train_labels");
  c.val_images = resolve(kv, "val_images");
  c.val_labels = resolve(kv, "val_labels");
  c.train_csv = resolve(kv, "train_csv");
  c.val_csv = resolve(kv, "val_csv");
  c.train_limit = size_key(kv, "train_limit", 0);
  c.val_limit = size_key(kv, "val_limit", 0);
  c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
    throw ConfigError(kv.origin() + ": val_fraction must lie in (0, 1)");
  }

  for (std::int64_t h : kv.get_int_list("hidden")) {
    if (h < 1) throw ConfigError(kv.origin() + ": hidden layer widths must be positive");
    c.hidden.push_back(static_cast<std::size_t>(h));
  }
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  if (c.weight_decay < 0.0) throw ConfigError(kv.origin() + ": weight_decay must be >= 0");
  c.batch_size = static_cast<std::size_t>(positive_int(kv, "batch_size", static_cast<std::int64_t>(c.batch_size)));

  c.quad_dim = static_cast<std::size_t>(positive_int(kv, "quad_dim", static_cast<std::int64_t>(c.quad_dim)));
  c.quad_min_eig = kv.get_double("quad_min_eig", c.quad_min_eig);
  c.quad_max_eig = kv.get_double("quad_max_eig", c.quad_max_eig);
  c.quad_noise = kv.get_double("quad_noise", c.quad_noise);
  if (!(c.quad_min_eig >= 0.0 && c.quad_max_eig >= c.quad_min_eig && std::isfinite(c.quad_max_eig))) {
    throw ConfigError(kv.origin() + ": need 0 <= quad_min_eig <= quad_max_eig < inf");
  }
  if (!(c.quad_noise >= 0.0 && std::isfinite(c.quad_noise))) {
    throw ConfigError(kv.origin() + ": quad_noise must be finite and >= 0");
  }
  c.rosenbrock_dim = static_cast<std::size_t>(positive_int(kv, "rosenbrock_dim", 2));
  c.batches_per_epoch = static_cast<std::uint64_t>(positive_int(kv, "batches_per_epoch", 10));

  HyperParams& hp = c.hp;
  hp.n_replicas = positive_int(kv, "n", 1);
  hp.L = static_cast<std::uint64_t>(positive_int(kv, "L", static_cast<std::int64_t>(hp.L)));
  hp.alpha = kv.get_double("alpha", hp.alpha);
  hp.eta = kv.get_double("eta", hp.eta);
  hp.eta_prime = kv.get_double("eta_prime", hp.eta_prime);
  hp.eta_dprime = kv.get_optional_double("eta_dprime");
  hp.gamma0 = kv.get_double("gamma0", hp.gamma0);
  hp.rho0 = kv.get_double("rho0", hp.rho0);
  hp.gamma_floor = kv.get_double("gamma_floor", hp.gamma_floor);
  hp.rho_floor = kv.get_double("rho_floor", hp.rho_floor);
  hp.momentum = kv.get_double("momentum", hp.momentum);
  try {
    hp.validate();
  } catch (const InvalidHyperparameter& e) {
    throw ConfigError(kv.origin() + ": " + e.what());
  }
  if ((c.algorithm == Algorithm::sgd || c.algorithm == Algorithm::entropy_sgd) && hp.n_replicas != 1) {
    throw ConfigError(kv.origin() + ": " + to_string(c.algorithm) + " runs a single replica; set n=1");
  }
  if (c.algorithm == Algorithm::sheriff && hp.n_replicas > 4) {
    throw ConfigError(kv.origin() + ": sheriff supports n <= 4");
  }

  c.shard_fraction = kv.get_double("shard_fraction", c.shard_fraction);
  if (!(c.shard_fraction > 0.0 && c.shard_fraction <= 1.0)) {
    throw ConfigError(kv.origin() + ": shard_fraction must lie in (0, 1]");
  }
  if (c.algorithm == Algorithm::sheriff && c.shard_fraction != 1.0) {
    throw ConfigError(kv.origin() + ": sheriff does not support shard_fraction");
  }
  c.lr_drop_epochs = kv.get_int_list("lr_drop_epochs");
  c.lr_drop_factor = kv.get_double("lr_drop_factor", c.lr_drop_factor);
  if (!(c.lr_drop_factor >= 1.0 && std::isfinite(c.lr_drop_factor))) {
    throw ConfigError(kv.origin() + ": lr_drop_factor must be finite and >= 1");
  }
  c.init_scale = kv.get_double("init_scale", c.init_scale);

  c.epochs = positive_int(kv, "epochs", c.epochs);
  if (!kv.has("seed")) throw ConfigError(kv.origin() + ": missing key 'seed' (runs need an explicit seed)");
  c.seed = kv.get_u64("seed", 0);
  c.data_seed = kv.get_u64("data_seed", c.seed);

  if (c.oracle == OracleKind::mlp) {
    if (c.dataset == DatasetKind::idx && (c.train_images.empty() || c.train_labels.empty())) {
      throw ConfigError(kv.origin() + ": dataset=idx needs train_images and train_labels");
    }
    if (c.dataset == DatasetKind::idx && (c.val_images.empty() != c.val_labels.empty())) {
      throw ConfigError(kv.origin() + ": val_images and val_labels go together");
    }
    if (c.dataset == DatasetKind::csv && c.train_csv.empty()) {
      throw ConfigError(kv.origin() + ": dataset=csv needs train_csv");
    }
  }
  return c;
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string text = canonical();
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

double collapse_metric(std::span<const FlatParams> replicas, const FlatParams& server) {
  if (replicas.empty()) throw InvalidArgument("collapse_metric: need at least one replica");
  double worst = 0.0;
  for (const auto& r : replicas) worst = std::max(worst, distance2(r.span(), server.span()));
  return worst;
}

double collapse_metric(std::span<const ReplicaState> replicas, const ServerState& server) {
  if (replicas.empty()) throw InvalidArgument("collapse_metric: need at least one replica");
  double worst = 0.0;
  for (const auto& r : replicas) worst = std::max(worst, distance2(r.x.span(), server.x.span()));
  return worst;
}

CommRatio comm_ratio_exact(const RunRecord& parle, const RunRecord& elastic) {
  if (parle.n != elastic.n || parle.num_params != elastic.num_params) {
    throw InvalidArgument("comm_ratio: runs differ in replica count or parameter count");
  }
  if (parle.ledger.grad_evals != elastic.ledger.grad_evals) {
    throw InvalidArgument("comm_ratio: runs differ in gradient evaluations (" +
                          std::to_string(parle.ledger.grad_evals) + " vs " +
                          std::to_string(elastic.ledger.grad_evals) + ")");
  }
  const std::uint64_t pf = parle.ledger.floats_up + parle.ledger.floats_down;
  const std::uint64_t ef = elastic.ledger.floats_up + elastic.ledger.floats_down;
  if (parle.ledger.grad_evals == 0 || ef == 0) {
    throw InvalidArgument("comm_ratio: reference run has no communication");
  }
  // Equal gradient counts cancel; what remains is a ratio of integers.
  const std::uint64_t g = std::gcd(pf, ef);
  return CommRatio{pf / g, ef / g};
}

double comm_ratio(const RunRecord& parle, const RunRecord& elastic) {
  return comm_ratio_exact(parle, elastic).value();
}

EquivalenceStats equivalence_trial(double gamma, std::uint64_t count, double sigma, int seeds,
                                   const EquivalenceOptions& opts) {
  if (!(gamma > 0.0) || count == 0 || seeds < 1 || !(sigma >= 0.0)) {
    throw InvalidArgument("equivalence_trial: need gamma > 0, count >= 1, seeds >= 1, sigma >= 0");
  }
  EquivalenceStats stats;
  const std::size_t d = opts.dim;
  for (int s = 0; s < seeds; ++s) {
    Rng problem = Rng::substream(opts.seed, static_cast<std::uint64_t>(s));
    QuadraticOracle base = opts.identity
                               ? QuadraticOracle::identity(d)
                               : QuadraticOracle::random(d, problem, opts.min_eig, opts.max_eig);
    if (!(base.min_eigenvalue() > 0.0)) {
      throw InvalidArgument("equivalence_trial: quadratic must be strongly convex");
    }
    if (opts.eta_prime * (base.spectral_norm() + 1.0 / gamma) >= 2.0) {
      throw InvalidArgument("equivalence_trial: eta' too large for this gamma");
    }
    const QuadraticOracle o = base.with_noise(sigma);
    FlatParams anchor(d);
    for (std::size_t i = 0; i < d; ++i) anchor[i] = problem.normal();
    const std::uint64_t chains = problem.next_u64();

    const double inv_gamma = 1.0 / gamma;
    std::vector<double> grad(d);
    auto step = [&](FlatParams& y, Rng& rng) {
      o.value_grad(y.span(), {}, grad, rng);
      for (std::size_t i = 0; i < d; ++i) {
        y[i] -= opts.eta_prime * (grad[i] + inv_gamma * (y[i] - anchor[i]));
      }
    };

    FlatParams temporal(d);
    {
      Rng rng = Rng::substream(chains, 0);
      FlatParams y = anchor;
      for (std::uint64_t t = 0; t < opts.burn_in; ++t) step(y, rng);
      for (std::uint64_t t = 0; t < count; ++t) {
        step(y, rng);
        for (std::size_t i = 0; i < d; ++i) temporal[i] += y[i];
      }
      for (std::size_t i = 0; i < d; ++i) temporal[i] /= static_cast<double>(count);
    }

    std::vector<FlatParams> finals;
    finals.reserve(count);
    for (std::uint64_t a = 0; a < count; ++a) {
      Rng rng = Rng::substream(chains, 1 + a);
      FlatParams y = anchor;
      for (std::uint64_t t = 0; t < opts.burn_in; ++t) step(y, rng);
      finals.push_back(std::move(y));
    }
    const FlatParams spatial = vec_avg(std::span<const FlatParams>(finals));

    const FlatParams prox = quad_proximal_point(base, anchor, gamma);
    const double dist = distance2(temporal.span(), spatial.span());
    stats.distances.push_back(dist);
    stats.mean_distance += dist;
    stats.max_distance = std::max(stats.max_distance, dist);
    stats.max_temporal_to_prox = std::max(stats.max_temporal_to_prox, distance2(temporal.span(), prox.span()));
    stats.max_spatial_to_prox = std::max(stats.max_spatial_to_prox, distance2(spatial.span(), prox.span()));
    stats.max_abs_average = std::max({stats.max_abs_average, norm2(temporal.span()), norm2(spatial.span())});
  }
  stats.mean_distance /= static_cast<double>(seeds);
  return stats;
}

namespace {

std::pair<Dataset, Dataset> load_data(const ExperimentConfig& c) {
  Rng rng = Rng::substream(c.data_seed, kDataStream);
  switch (c.dataset) {
    case DatasetKind::blobs: {
      Dataset all = make_blobs(c.blobs_classes, c.blobs_per_class, c.blobs_dim, c.blobs_spread, rng);
      return holdout_split(all, c.val_fraction, rng);
    }
    case DatasetKind::idx: {
      Dataset train = load_idx(c.train_images, c.train_labels, c.train_limit);
      if (c.val_images.empty()) return holdout_split(train, c.val_fraction, rng);
      Dataset val = load_idx(c.val_images, c.val_labels, c.val_limit);
      return {std::move(train), std::move(val)};
    }
    case DatasetKind::csv: {
      Dataset train = load_csv(c.train_csv, c.train_limit);
      if (c.val_csv.empty()) return holdout_split(train, c.val_fraction, rng);
      Dataset val = load_csv(c.val_csv, c.val_limit);
      return {std::move(train), std::move(val)};
    }
  }
  throw ConfigError("unsupported dataset");
}

}  // namespace

Problem build_problem(const ExperimentConfig& c) {
  Problem p;
  switch (c.oracle) {
    case OracleKind::quadratic: {
      Rng rng = Rng::substream(c.data_seed, kProblemStream);
      p.quad = std::make_shared<const QuadraticOracle>(
          QuadraticOracle::random(c.quad_dim, rng, c.quad_min_eig, c.quad_max_eig).with_noise(c.quad_noise));
      p.oracle = p.quad;
      break;
    }
    case OracleKind::rosenbrock:
      p.oracle = std::make_shared<const RosenbrockOracle>(c.rosenbrock_dim);
      break;
    case OracleKind::mlp: {
      auto [train, val] = load_data(c);
      if (val.features != train.features) throw FormatError("validation and training features differ");
      p.train = std::make_shared<const Dataset>(std::move(train));
      p.val = std::make_shared<const Dataset>(std::move(val));
      std::vector<std::size_t> sizes{p.train->features};
      sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
      sizes.push_back(static_cast<std::size_t>(std::max(p.train->num_classes, p.val->num_classes)));
      p.mlp = std::make_shared<const MlpOracle>(sizes, p.train, c.weight_decay);
      p.oracle = p.mlp;
      break;
    }
  }
  return p;
}

namespace {

FlatParams initial_point(const Problem& p, const ExperimentConfig& c, Rng& rng) {
  if (p.mlp) return p.mlp->init_params(rng);
  FlatParams x(p.oracle->dim());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.init_scale * rng.normal();
  return x;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double drop_scale(const ExperimentConfig& c, int epoch) {
  double s = 1.0;
  for (std::int64_t d : c.lr_drop_epochs) {
    if (epoch > d) s /= c.lr_drop_factor;
  }
  return s;
}

double drain_loss(std::span<ReplicaState> states) {
  double sum = 0.0;
  std::uint64_t count = 0;
  for (auto& s : states) {
    sum += s.loss_sum;
    count += s.loss_count;
    s.loss_sum = 0.0;
    s.loss_count = 0;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void write_text(const std::filesystem::path& path, const std::string& text, std::ios::openmode mode) {
  std::ofstream f(path, std::ios::binary | mode);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg, const RunOutput* out) {
  const Problem prob = build_problem(cfg);
  const LossOracle& oracle = *prob.oracle;
  const int n = cfg.hp.n_replicas;
  const std::size_t N = oracle.dim();
  const bool multi = cfg.algorithm == Algorithm::elastic_sgd || cfg.algorithm == Algorithm::parle ||
                     cfg.algorithm == Algorithm::sheriff;

  // Sample assignment per replica.
  std::vector<std::vector<std::size_t>> shards;
  if (prob.train) {
    const std::size_t M = prob.train->size();
    Rng rng = Rng::substream(cfg.seed, kShardStream);
    if (cfg.shard_fraction >= 1.0 || cfg.algorithm == Algorithm::sheriff) {
      shards.assign(static_cast<std::size_t>(n), iota_indices(M));
    } else if (multi) {
      shards = shard(M, n, cfg.shard_fraction, rng).assignment;
    } else {
      std::vector<std::size_t> perm = rng.permutation(M);
      perm.resize(static_cast<std::size_t>(std::ceil(cfg.shard_fraction * static_cast<double>(M))));
      shards.push_back(std::move(perm));
    }
  }

  HyperParams hp = cfg.hp;
  if (prob.train) {
    hp.B = (shards.front().size() + cfg.batch_size - 1) / cfg.batch_size;
  } else {
    hp.B = cfg.batches_per_epoch;
  }

  Rng init_rng = Rng::substream(cfg.seed, kInitStream);
  std::vector<FlatParams> x0;
  x0.push_back(initial_point(prob, cfg, init_rng));
  for (int a = 1; a < n; ++a) {
    x0.push_back(cfg.init == InitKind::independent ? initial_point(prob, cfg, init_rng) : x0.front());
  }

  RunRecord rec;
  rec.algorithm = cfg.algorithm;
  rec.n = n;
  rec.num_params = N;
  rec.L = hp.L;
  rec.B = hp.B;
  rec.seed = cfg.seed;
  rec.config_text = cfg.canonical();
  rec.config_hash = cfg.hash();

  std::vector<ReplicaState> replicas;
  ServerState server;
  SheriffState sheriff;
  if (cfg.algorithm == Algorithm::sheriff) {
    sheriff = make_sheriff(x0.front(), n, prob.train ? shards.front() : std::vector<std::size_t>{},
                           cfg.batch_size, cfg.seed);
  } else {
    replicas = make_replicas(x0, prob.train ? shards : std::vector<std::vector<std::size_t>>{},
                             cfg.batch_size, cfg.seed);
    server.x = vec_avg(std::span<const FlatParams>(x0));
  }

  std::filesystem::path metrics_path, timing_path;
  if (out) {
    metrics_path = out->dir / "metrics.jsonl";
    timing_path = out->dir / "timing.jsonl";
    write_text(metrics_path, "", std::ios::trunc);
    write_text(timing_path, "", std::ios::trunc);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    HyperParams ep = hp;
    ep.eta = hp.eta * drop_scale(cfg, epoch);

    EpochRow row;
    row.epoch = epoch;
    const FlatParams* model = nullptr;
    switch (cfg.algorithm) {
      case Algorithm::sgd:
        sgd_epoch(oracle, replicas.front(), ep);
        model = &replicas.front().x;
        row.step = replicas.front().k;
        break;
      case Algorithm::entropy_sgd:
        for (std::uint64_t b = 0; b < ep.B; ++b) entropy_sgd_cycle(oracle, replicas.front(), ep);
        model = &replicas.front().x;
        row.step = replicas.front().k;
        row.gamma = scoped_gamma(row.step, ep);
        break;
      case Algorithm::elastic_sgd:
        for (std::uint64_t b = 0; b < ep.B; ++b) elastic_sgd_step(oracle, replicas, server, ep, rec.ledger, cfg.mode);
        model = &server.x;
        row.step = server.round * ep.L;
        row.rho = scoped_rho(row.step, ep);
        break;
      case Algorithm::parle:
        for (std::uint64_t b = 0; b < ep.B; ++b) parle_round(oracle, replicas, server, ep, rec.ledger, cfg.mode);
        model = &server.x;
        row.step = server.round * ep.L;
        row.gamma = scoped_gamma(row.step, ep);
        row.rho = scoped_rho(row.step, ep);
        break;
      case Algorithm::sheriff:
        for (std::uint64_t b = 0; b < ep.B; ++b) sheriff_round(oracle, sheriff, ep, rec.ledger, cfg.mode);
        model = &sheriff.sheriff.x;
        row.step = sheriff.sheriff.round * ep.L;
        row.gamma = scoped_gamma(row.step, ep);
        row.rho = scoped_rho(row.step, ep);
        break;
    }
    // Single-replica runs have no server, so their ledger stays at zero.
    row.grad_evals = multi ? rec.ledger.grad_evals : replicas.front().k;

    if (cfg.algorithm == Algorithm::sheriff) {
      double sum = 0.0;
      std::uint64_t count = 0;
      for (auto& group : sheriff.workers) {
        for (auto& w : group) {
          sum += w.loss_sum;
          count += w.loss_count;
          w.loss_sum = 0.0;
          w.loss_count = 0;
        }
      }
      row.train_loss = count ? sum / static_cast<double>(count) : 0.0;
      row.collapse = collapse_metric(std::span<const ReplicaState>(sheriff.deputies), sheriff.sheriff);
    } else {
      row.train_loss = drain_loss(replicas);
      if (multi) row.collapse = collapse_metric(std::span<const ReplicaState>(replicas), server);
    }

    if (prob.mlp) {
      row.train_error = prob.mlp->error_percent(model->span(), *prob.train);
      row.val_error = prob.mlp->error_percent(model->span(), *prob.val);
    } else {
      std::vector<double> g(N);
      if (prob.quad) {
        row.objective = prob.quad->exact_value_grad(model->span(), g);
        row.dist_to_opt = distance2(model->span(), prob.quad->xstar());
      } else {
        Rng unused(0);
        row.objective = oracle.value_grad(model->span(), {}, g, unused);
      }
    }
    row.ledger = rec.ledger;
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (out) {
      write_text(metrics_path, metrics_line(row) + "\n", std::ios::app);
      write_text(timing_path, timing_line(row) + "\n", std::ios::app);
    }
    rec.rows.push_back(std::move(row));
    rec.model = *model;
  }

  if (cfg.algorithm == Algorithm::sheriff) {
    for (const auto& d : sheriff.deputies) rec.replicas.push_back(d.x);
  } else if (multi) {
    for (const auto& r : replicas) rec.replicas.push_back(r.x);
  }
  rec.model = FlatParams(rec.model.values(), oracle.shapes());
  rec.grad_evals = rec.rows.back().grad_evals;

  if (out) {
    write_text(out->dir / "summary.csv", summary_csv(rec), std::ios::trunc);
    save_model(out->dir / "model.bin", rec.model, ModelHeader{cfg.seed, rec.config_hash});
  }
  return rec;
}

CommAudit comm_audit(int n, std::uint64_t L, std::uint64_t seed, std::uint64_t rounds) {
  if (n < 1 || L < 1 || rounds < 1) throw InvalidArgument("comm_audit: n, L and rounds must be positive");
  auto run = [&](Algorithm algo, std::uint64_t epochs) {
    KeyValueConfig kv;
    kv.set("algorithm", to_string(algo));
    kv.set("oracle", "quadratic");
    kv.set("quad_dim", "6");
    kv.set("quad_min_eig", "0.5");
    kv.set("quad_max_eig", "1.5");
    kv.set("n", std::to_string(n));
    kv.set("L", std::to_string(L));
    kv.set("batches_per_epoch", "1");
    kv.set("epochs", std::to_string(epochs));
    kv.set("seed", std::to_string(seed));
    return run_experiment(ExperimentConfig::from(kv));
  };
  CommAudit a;
  a.parle = run(Algorithm::parle, rounds);
  a.elastic = run(Algorithm::elastic_sgd, rounds * L);
  a.ratio = comm_ratio_exact(a.parle, a.elastic);
  return a;
}

}  // namespace parle
