#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "parle/error.hpp"
#include "parle/harness.hpp"
#include "parle/persistence.hpp"

using namespace parle;
namespace fs = std::filesystem;

namespace {

ExperimentConfig config(const std::string& text) {
  return ExperimentConfig::from(KeyValueConfig::parse(text));
}

const char* kQuadParle =
    "algorithm = parle\noracle = quadratic\nquad_dim = 6\nn = 3\nL = 5\n"
    "batches_per_epoch = 4\ninit = independent\nepochs = 6\nseed = 3\n";

const char* kBlobsParle =
    "algorithm = parle\noracle = mlp\ndataset = blobs\nblobs_classes = 3\nblobs_per_class = 30\n"
    "blobs_dim = 4\nhidden = 8\nbatch_size = 16\nn = 2\nL = 5\nepochs = 3\nseed = 9\n";

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            (std::string("parle_h_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Config, RejectsUnknownKeysAndMissingSeed) {
  EXPECT_THROW(config("algorithm = parle\nseed = 1\nlearning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(config("algorithm = parle\n"), ConfigError);
  EXPECT_THROW(config("seed = 1\n"), ConfigError);
  EXPECT_THROW(config("algorithm = adam\nseed = 1\n"), ConfigError);
  EXPECT_THROW(config("algorithm = sgd\nn = 2\nseed = 1\n"), ConfigError);
  EXPECT_THROW(config("algorithm = sheriff\nn = 5\nseed = 1\n"), ConfigError);
  EXPECT_THROW(config("algorithm = parle\nseed = 1\nalpha = 1.5\n"), ConfigError);
  EXPECT_THROW(config("algorithm = parle\nseed = 1\neta = fast\n"), ConfigError);
  EXPECT_THROW(config("algorithm = parle\noracle = mlp\ndataset = idx\nseed = 1\n"), ConfigError);
}

TEST(Config, DataSeedDefaultsToSeedAndHashTracksContent) {
  const auto a = config("algorithm = parle\nseed = 4\n");
  EXPECT_EQ(a.data_seed, 4u);
  const auto b = config("seed = 4\nalgorithm = parle\n");
  EXPECT_EQ(a.hash(), b.hash());
  const auto c = config("algorithm = parle\nseed = 5\n");
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Harness, RunsAreDeterministic) {
  const auto cfg = config(kBlobsParle);
  const RunRecord r1 = run_experiment(cfg);
  const RunRecord r2 = run_experiment(cfg);
  EXPECT_EQ(metrics_jsonl(r1), metrics_jsonl(r2));
  EXPECT_EQ(summary_csv(r1), summary_csv(r2));
  EXPECT_EQ(r1.model, r2.model);
}

TEST(Harness, ParallelModeMatchesSequential) {
  auto seq = config(kBlobsParle);
  auto par = seq;
  par.mode = ExecMode::parallel;
  EXPECT_EQ(metrics_jsonl(run_experiment(seq)), metrics_jsonl(run_experiment(par)));
}

TEST(Harness, ScopingColumnsAndGradientCounts) {
  const auto cfg = config(kQuadParle);
  const RunRecord r = run_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.B, 4u);
  HyperParams hp = cfg.hp;
  hp.B = r.B;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.step, static_cast<std::uint64_t>(row.epoch) * 4 * 5);
    ASSERT_TRUE(row.gamma && row.rho && row.collapse && row.dist_to_opt);
    EXPECT_DOUBLE_EQ(*row.gamma, scoped_gamma(row.step, hp));
    EXPECT_DOUBLE_EQ(*row.rho, scoped_rho(row.step, hp));
    // n * B * L per epoch
    EXPECT_EQ(row.grad_evals, static_cast<std::uint64_t>(row.epoch) * 3 * 4 * 5);
    EXPECT_EQ(row.ledger.reduce_events, static_cast<std::uint64_t>(row.epoch) * 4);
  }
  EXPECT_EQ(r.replicas.size(), 3u);
}

TEST(Harness, SingleReplicaRunsKeepLedgerAtZero) {
  const RunRecord r = run_experiment(config("algorithm = sgd\noracle = quadratic\nepochs = 3\nseed = 1\n"));
  EXPECT_EQ(r.ledger, CommLedger{});
  EXPECT_EQ(r.grad_evals, 30u);
  EXPECT_TRUE(r.replicas.empty());
  for (const auto& row : r.rows) EXPECT_FALSE(row.collapse.has_value());
}

TEST(Harness, ParleWithoutCouplingMatchesEntropySgd) {
  const std::string body = "oracle = quadratic\nquad_dim = 5\nquad_noise = 0.1\nL = 4\nepochs = 3\nseed = 2\n";
  const RunRecord p = run_experiment(config("algorithm = parle\nn = 1\nrho0 = inf\n" + body));
  const RunRecord e = run_experiment(config("algorithm = entropy_sgd\n" + body));
  EXPECT_EQ(p.model, e.model);
}

TEST(Harness, LrDropAppliesToEtaOnly) {
  const std::string body = "algorithm = sgd\noracle = quadratic\nepochs = 4\nseed = 1\n";
  const RunRecord plain = run_experiment(config(body));
  const RunRecord dropped = run_experiment(config(body + "lr_drop_epochs = 3\n"));
  // Epochs after the listed one run at the lower rate.
  EXPECT_EQ(plain.rows[2].objective, dropped.rows[2].objective);
  EXPECT_NE(plain.rows[3].objective, dropped.rows[3].objective);
}

TEST(Harness, WritesArtifacts) {
  TempDir dir;
  const RunOutput out{dir.path()};
  const RunRecord r = run_experiment(config(kBlobsParle), &out);
  for (const char* f : {"metrics.jsonl", "timing.jsonl", "summary.csv", "model.bin"})
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  EXPECT_EQ(slurp(dir.path() / "metrics.jsonl"), metrics_jsonl(r));
  ModelHeader h;
  EXPECT_EQ(load_model(dir.path() / "model.bin", &h), r.model);
  EXPECT_EQ(h.seed, 9u);
  EXPECT_EQ(h.config_hash, r.config_hash);
}

TEST(CommRatio, MatchesOneOverL) {
  const CommAudit a = comm_audit(3, 25, 1);
  EXPECT_EQ(a.ratio.num, 1u);
  EXPECT_EQ(a.ratio.den, 25u);
  EXPECT_DOUBLE_EQ(comm_ratio(a.parle, a.elastic), 0.04);
  const CommAudit b = comm_audit(3, 1, 1);
  EXPECT_DOUBLE_EQ(b.ratio.value(), 1.0);
  const CommAudit c = comm_audit(1, 5, 1);
  EXPECT_EQ(c.ratio.den, 5u);
}

TEST(CommRatio, MismatchedRunsThrow) {
  CommAudit a = comm_audit(2, 5, 1);
  RunRecord e = a.elastic;
  e.ledger.grad_evals += 1;
  EXPECT_THROW(comm_ratio(a.parle, e), InvalidArgument);
  e = a.elastic;
  e.n = 3;
  EXPECT_THROW(comm_ratio(a.parle, e), InvalidArgument);
}

TEST(Collapse, Examples) {
  const FlatParams server = FlatParams::from({0, 0});
  std::vector<FlatParams> same(3, server);
  EXPECT_EQ(collapse_metric(std::span<const FlatParams>(same), server), 0.0);
  std::vector<FlatParams> pm{FlatParams::from({1, 0}), FlatParams::from({-1, 0})};
  EXPECT_DOUBLE_EQ(collapse_metric(std::span<const FlatParams>(pm), server), 1.0);
  EXPECT_THROW(collapse_metric(std::span<const FlatParams>(), server), InvalidArgument);
}

TEST(Equivalence, NoiselessChainsAgree) {
  const EquivalenceStats s = equivalence_trial(1.0, 16, 0.0, 5);
  EXPECT_LT(s.max_distance, 1e-9);
  EXPECT_LT(s.max_temporal_to_prox, 1e-9);
}

TEST(Equivalence, NoisyWithinStatisticalBound) {
  const EquivalenceStats s = equivalence_trial(1.0, 64, 0.1, 30);
  EXPECT_LE(s.mean_distance, 5 * 0.1 / 8);
  EXPECT_EQ(s.distances.size(), 30u);
}

TEST(Equivalence, LargeGammaIdentityAveragesVanish) {
  EquivalenceOptions opts;
  opts.identity = true;
  const EquivalenceStats s = equivalence_trial(1e6, 8, 0.0, 3, opts);
  EXPECT_LT(s.max_abs_average, 1e-5);
}

TEST(Equivalence, RejectsBadArguments) {
  EXPECT_THROW(equivalence_trial(0.0, 4, 0.1, 1), InvalidArgument);
  EXPECT_THROW(equivalence_trial(1.0, 0, 0.1, 1), InvalidArgument);
  EquivalenceOptions opts;
  opts.eta_prime = 5.0;
  EXPECT_THROW(equivalence_trial(1.0, 4, 0.1, 1, opts), InvalidArgument);
}

TEST(Persistence, RoundTripAndCorruption) {
  TempDir dir;
  const auto p = dir.path() / "m.bin";
  FlatParams x(std::vector<Shape>{{2, 2}, {2}});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::ldexp(1.0, static_cast<int>(i)) / 3.0;
  save_model(p, x, ModelHeader{11, 0xabcdefULL});
  ModelHeader h;
  const FlatParams y = load_model(p, &h);
  EXPECT_EQ(y, x);
  EXPECT_EQ(y.shapes(), x.shapes());
  EXPECT_EQ(h.seed, 11u);
  EXPECT_EQ(h.config_hash, 0xabcdefULL);

  fs::resize_file(p, fs::file_size(p) - 3);
  EXPECT_THROW(load_model(p), FormatError);
  save_model(p, x, {});
  {
    std::ofstream f(p, std::ios::app | std::ios::binary);
    f << "x";
  }
  EXPECT_THROW(load_model(p), FormatError);
  {
    std::ofstream f(p, std::ios::binary);
    f << "{\"format\":\"other\"}\n";
  }
  EXPECT_THROW(load_model(p), FormatError);
  EXPECT_THROW(load_model(dir.path() / "missing.bin"), FormatError);
}

TEST(Persistence, MetricsLineOmitsWallTime) {
  EpochRow row;
  row.epoch = 2;
  row.wall_seconds = 1.25;
  row.train_loss = 0.5;
  const std::string line = metrics_line(row);
  EXPECT_EQ(line.find("wall"), std::string::npos);
  EXPECT_NE(timing_line(row).find("wall"), std::string::npos);
  EXPECT_EQ(line.find('\n'), std::string::npos);
}
