// parle: train, audit and inspect runs of the Parle optimizer family.
//
// Exit codes: 0 ok, 1 config or usage error, 2 data error, 3 divergence,
// 4 a check printed FAIL, 5 any other error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "parle/alignment.hpp"
#include "parle/error.hpp"
#include "parle/harness.hpp"
#include "parle/oracle.hpp"
#include "parle/persistence.hpp"
#include "parle/vector_ops.hpp"

namespace fs = std::filesystem;
using namespace parle;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kDiverged = 3, kCheckFailed = 4, kOther = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw UsageError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
  } else {
    fs::create_directories(dir);
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

int verdict(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
  return ok ? kOk : kCheckFailed;
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string algo;
  std::optional<int> n;
  std::optional<int> epochs;
  std::string mode;
  std::string out;
  bool force = false;
};

int cmd_train(const TrainArgs& a) {
  KeyValueConfig kv = KeyValueConfig::load(a.config);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  if (!a.algo.empty()) kv.set("algorithm", a.algo);
  if (a.n) kv.set("n", std::to_string(*a.n));
  if (a.epochs) kv.set("epochs", std::to_string(*a.epochs));
  if (!a.mode.empty()) kv.set("mode", a.mode);
  const ExperimentConfig cfg = ExperimentConfig::from(kv);

  const fs::path dir = a.out;
  prepare_out_dir(dir, a.force);
  write_file(dir / "config.echo", cfg.canonical());
  RunOutput out{dir};
  const RunRecord rec = run_experiment(cfg, &out);

  const EpochRow& last = rec.rows.back();
  std::cout << to_string(rec.algorithm) << " n=" << rec.n << " params=" << rec.num_params
            << " epochs=" << last.epoch << " grad_evals=" << rec.grad_evals
            << " train_loss=" << fixed(last.train_loss);
  if (last.train_error) std::cout << " train_err=" << fixed(*last.train_error, 2) << "%";
  if (last.val_error) std::cout << " val_err=" << fixed(*last.val_error, 2) << "%";
  if (last.objective) std::cout << " f=" << sci(*last.objective);
  std::cout << "\nwrote " << (dir / "metrics.jsonl").string() << ", " << (dir / "summary.csv").string()
            << ", " << (dir / "model.bin").string() << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::string oracle = "quadratic";
  std::string layers = "2,4,3";
  int dim = 6;
  int trials = 5;
  std::optional<std::uint64_t> seed;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.trials < 1) throw UsageError("--trials must be at least 1");
  if (!a.seed) throw UsageError("gradcheck needs --seed");
  Rng rng(*a.seed);
  double worst = 0.0;
  for (int t = 0; t < a.trials; ++t) {
    if (a.oracle == "quadratic") {
      const auto q = QuadraticOracle::random(static_cast<std::size_t>(a.dim), rng, 0.5, 2.0);
      FlatParams x(q.dim());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
      worst = std::max(worst, gradient_check(q, x.span(), {}, Rng(0)));
    } else if (a.oracle == "rosenbrock") {
      const RosenbrockOracle r(static_cast<std::size_t>(a.dim));
      FlatParams x(r.dim());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
      worst = std::max(worst, gradient_check(r, x.span(), {}, Rng(0), 1e-5));
    } else if (a.oracle == "mlp") {
      KeyValueConfig kv = KeyValueConfig::parse("hidden=" + a.layers, "--layers");
      std::vector<std::size_t> sizes;
      for (auto v : kv.get_int_list("hidden")) {
        if (v < 1) throw UsageError("--layers entries must be positive");
        sizes.push_back(static_cast<std::size_t>(v));
      }
      if (sizes.size() < 2) throw UsageError("--layers needs at least input and output widths");
      const int classes = static_cast<int>(sizes.back());
      auto data = std::make_shared<Dataset>(
          make_blobs(std::max(classes, 1), 4, static_cast<int>(sizes.front()), 0.5, rng));
      data->num_classes = classes;
      const MlpOracle m(sizes, data, 1e-3);
      const FlatParams x = m.init_params(rng);
      std::vector<std::size_t> batch(data->size());
      for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
      worst = std::max(worst, gradient_check(m, x.span(), batch, Rng(0), 1e-5));
    } else {
      throw UsageError("unknown oracle '" + a.oracle + "' (quadratic, rosenbrock, mlp)");
    }
  }
  std::cout << "max relative error " << sci(worst) << " over " << a.trials << " trials\n";
  return verdict("gradcheck " + a.oracle, worst < 1e-4, "threshold 1e-4");
}

struct EquivArgs {
  double gamma = 1.0;
  int count = 64;
  double sigma = 0.0;
  int trials = 10;
  std::optional<std::uint64_t> seed;
};

int cmd_equiv(const EquivArgs& a) {
  if (a.trials < 1) throw UsageError("--trials must be at least 1");
  if (a.count < 1) throw UsageError("--count must be at least 1");
  if (!a.seed) throw UsageError("equiv needs --seed");
  EquivalenceOptions opts;
  opts.seed = *a.seed;
  const auto st = equivalence_trial(a.gamma, static_cast<std::uint64_t>(a.count), a.sigma, a.trials, opts);
  std::cout << "temporal vs spatial: mean distance " << sci(st.mean_distance) << ", max " << sci(st.max_distance)
            << "\nto proximal point: temporal " << sci(st.max_temporal_to_prox) << ", spatial "
            << sci(st.max_spatial_to_prox) << "\n";
  if (a.sigma == 0.0) {
    const double worst = std::max({st.max_distance, st.max_temporal_to_prox, st.max_spatial_to_prox});
    return verdict("equiv", worst < 1e-9, "noise-free distance " + sci(worst) + " < 1e-9");
  }
  const double bound = 5.0 * a.sigma / std::sqrt(static_cast<double>(a.count));
  return verdict("equiv", st.mean_distance <= bound, "mean distance " + sci(st.mean_distance) + " <= " + sci(bound));
}

struct CommauditArgs {
  int n = 3;
  int L = 25;
  int rounds = 4;
  std::optional<std::uint64_t> seed;
};

int cmd_commaudit(const CommauditArgs& a) {
  if (a.n < 1 || a.L < 1 || a.rounds < 1) throw UsageError("--n, --L and --rounds must be positive");
  if (!a.seed) throw UsageError("commaudit needs --seed");
  const auto L = static_cast<std::uint64_t>(a.L);
  const CommAudit audit = comm_audit(a.n, L, *a.seed, static_cast<std::uint64_t>(a.rounds));
  const auto& p = audit.parle.ledger;
  const auto& e = audit.elastic.ledger;
  std::cout << "parle:   grad_evals=" << p.grad_evals << " floats=" << p.floats_up + p.floats_down
            << " reduces=" << p.reduce_events << "\n"
            << "elastic: grad_evals=" << e.grad_evals << " floats=" << e.floats_up + e.floats_down
            << " reduces=" << e.reduce_events << "\n"
            << "ratio " << fixed(audit.ratio.value()) << " (" << audit.ratio.num << "/" << audit.ratio.den << ")\n";
  const bool exact = audit.ratio.num == 1 && audit.ratio.den == L;
  return verdict("commaudit", exact, "ratio == 1/" + std::to_string(L) + " exactly");
}

struct AlignArgs {
  std::string a, b, config, out;
  bool self_test = false;
  std::string layers = "5,16,16,3";
  int trials = 100;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

FlatParams random_net(const std::vector<std::size_t>& sizes, Rng& rng) {
  std::vector<Shape> shapes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    shapes.push_back({sizes[l + 1], sizes[l]});
    shapes.push_back({sizes[l + 1]});
  }
  FlatParams net(shapes);
  for (std::size_t i = 0; i < net.size(); ++i) net[i] = rng.normal();
  return net;
}

int cmd_align(const AlignArgs& a) {
  if (a.self_test) {
    if (!a.seed) throw UsageError("align --self-test needs --seed");
    if (a.trials < 1) throw UsageError("--trials must be at least 1");
    KeyValueConfig kv = KeyValueConfig::parse("layers=" + a.layers, "--layers");
    std::vector<std::size_t> sizes;
    for (auto v : kv.get_int_list("layers")) {
      if (v < 1) throw UsageError("--layers entries must be positive");
      sizes.push_back(static_cast<std::size_t>(v));
    }
    if (sizes.size() < 3) throw UsageError("--layers needs at least one hidden layer");
    Rng rng(*a.seed);
    int recovered = 0;
    double min_overlap = 1.0;
    for (int t = 0; t < a.trials; ++t) {
      const FlatParams net = random_net(sizes, rng);
      const LayerPermutation planted = LayerPermutation::random(net, rng);
      const FlatParams shuffled = apply_permutation(net, planted);
      const LayerPermutation found = greedy_align(net, shuffled);
      if (found == planted.inverse()) ++recovered;
      min_overlap = std::min(min_overlap, overlap(net, apply_permutation(shuffled, found)));
    }
    std::cout << "planted permutations recovered " << recovered << "/" << a.trials << ", min overlap "
              << fixed(min_overlap, 12) << "\n";
    return verdict("align self-test", recovered == a.trials && min_overlap == 1.0, "exact recovery, overlap 1");
  }

  if (a.a.empty() || a.b.empty()) throw UsageError("align needs --a and --b model files, or --self-test");
  const FlatParams na = load_model(a.a);
  const FlatParams nb = load_model(a.b);
  const LayerPermutation perm = greedy_align(na, nb);
  const FlatParams nb_aligned = apply_permutation(nb, perm);
  const double before = overlap(na, nb);
  const double after = overlap(na, nb_aligned);
  std::cout << "overlap unaligned " << fixed(before) << ", aligned " << fixed(after) << "\n";

  const FlatParams pair[2] = {na, nb};
  const FlatParams naive = vec_avg(std::span<const FlatParams>(pair));
  const FlatParams aligned = average_aligned(std::span<const FlatParams>(pair));
  if (!a.out.empty()) {
    const fs::path dir = a.out;
    prepare_out_dir(dir, a.force);
    write_file(dir / "config.echo", "a=" + a.a + "\nb=" + a.b + "\nconfig=" + a.config + "\n");
    save_model(dir / "naive_average.bin", naive, {});
    save_model(dir / "aligned_average.bin", aligned, {});
  }

  bool ok = after >= before;
  if (!a.config.empty()) {
    const Problem prob = build_problem(ExperimentConfig::from(KeyValueConfig::load(a.config)));
    if (!prob.mlp) throw UsageError("align --config must describe an mlp run");
    const double e_naive = prob.mlp->error_percent(naive.span(), *prob.val);
    const double e_aligned = prob.mlp->error_percent(aligned.span(), *prob.val);
    std::cout << "validation error: naive average " << fixed(e_naive, 2) << "%, aligned average "
              << fixed(e_aligned, 2) << "%\n";
    ok = ok && e_aligned < e_naive;
  }
  return verdict("align", ok, "aligned overlap >= unaligned" +
                                  std::string(a.config.empty() ? "" : ", aligned average beats naive"));
}

int cmd_report(const std::string& dir_arg) {
  const fs::path dir = dir_arg;
  std::ifstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw UsageError("no metrics.jsonl in " + dir.string());
  std::cout << "epoch  grad_evals   train_loss  train_err  val_err    gamma      rho        reduces\n";
  std::string line;
  auto opt = [](const nlohmann::json& j, const char* k, int digits) {
    return j.contains(k) ? fixed(j[k].get<double>(), digits) : std::string("-");
  };
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%5d  %10llu  %11s  %9s  %9s  %9s  %9s  %llu", j["epoch"].get<int>(),
                  static_cast<unsigned long long>(j["grad_evals"].get<std::uint64_t>()),
                  fixed(j["train_loss"].get<double>()).c_str(), opt(j, "train_error", 2).c_str(),
                  opt(j, "val_error", 2).c_str(), opt(j, "gamma", 4).c_str(), opt(j, "rho", 4).c_str(),
                  static_cast<unsigned long long>(j["ledger"]["reduce_events"].get<std::uint64_t>()));
    std::cout << buf << "\n";
  }
  std::ifstream summary(dir / "summary.csv");
  if (summary) std::cout << "\n" << summary.rdbuf();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parle optimizer family: training runs and audits"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run an experiment from a config file");
  t->add_option("--config", train.config, "Config file (key=value lines)")->required();
  t->add_option("--seed", train.seed, "Run seed (overrides the config)");
  t->add_option("--algo", train.algo, "sgd | entropy_sgd | elastic_sgd | parle | sheriff");
  t->add_option("--n", train.n, "Number of replicas");
  t->add_option("--epochs", train.epochs, "Number of epochs");
  t->add_option("--mode", train.mode, "sequential | parallel");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_flag("--force", train.force, "Overwrite a non-empty output directory");

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  g->add_option("--oracle", grad.oracle, "quadratic | rosenbrock | mlp");
  g->add_option("--layers", grad.layers, "MLP widths, e.g. 2,4,3");
  g->add_option("--dim", grad.dim, "Dimension for quadratic/rosenbrock");
  g->add_option("--trials", grad.trials, "Number of random points");
  g->add_option("--seed", grad.seed, "Seed");

  EquivArgs eq;
  auto* e = app.add_subcommand("equiv", "Temporal vs spatial averaging on random quadratics");
  e->add_option("--gamma", eq.gamma, "Coupling scale gamma");
  e->add_option("--count", eq.count, "L (temporal samples) = n (spatial replicas)");
  e->add_option("--sigma", eq.sigma, "Gradient noise scale");
  e->add_option("--trials", eq.trials, "Number of seeds");
  e->add_option("--seed", eq.seed, "Seed");

  CommauditArgs ca;
  auto* c = app.add_subcommand("commaudit", "Parle vs Elastic-SGD communication at matched budgets");
  c->add_option("--n", ca.n, "Replicas");
  c->add_option("--L", ca.L, "Inner steps per reduce");
  c->add_option("--rounds", ca.rounds, "Parle rounds");
  c->add_option("--seed", ca.seed, "Seed");

  AlignArgs al;
  auto* a = app.add_subcommand("align", "Permutation-align two models and compare averages");
  a->add_option("--a", al.a, "Reference model file");
  a->add_option("--b", al.b, "Model to align");
  a->add_option("--config", al.config, "Run config whose validation set scores the averages");
  a->add_option("--out", al.out, "Directory for the averaged models");
  a->add_flag("--force", al.force, "Overwrite a non-empty output directory");
  a->add_flag("--self-test", al.self_test, "Planted-permutation recovery on random networks");
  a->add_option("--layers", al.layers, "Self-test widths, e.g. 5,16,16,3");
  a->add_option("--trials", al.trials, "Self-test trials");
  a->add_option("--seed", al.seed, "Seed");

  std::string report_dir;
  auto* r = app.add_subcommand("report", "Print the metrics of a finished run");
  r->add_option("--out", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (g->parsed()) return cmd_gradcheck(grad);
    if (e->parsed()) return cmd_equiv(eq);
    if (c->parsed()) return cmd_commaudit(ca);
    if (a->parsed()) return cmd_align(al);
    if (r->parsed()) return cmd_report(report_dir);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kConfig;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const InvalidArgument& err) {
    std::cerr << "invalid argument: " << err.what() << "\n";
    return kConfig;
  } catch (const FormatError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const DivergenceError& err) {
    std::cerr << "diverged at step " << err.step() << " (replica " << err.replica() << "): " << err.what() << "\n";
    return kDiverged;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kConfig;
}
