#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parle/comm_ledger.hpp"
#include "parle/config.hpp"
#include "parle/flat_params.hpp"
#include "parle/hyper_params.hpp"
#include "parle/optimizers.hpp"
#include "parle/oracle.hpp"

namespace parle {

enum class Algorithm { sgd, entropy_sgd, elastic_sgd, parle, sheriff };
enum class OracleKind { quadratic, rosenbrock, mlp };
enum class DatasetKind { blobs, idx, csv };
enum class InitKind { shared, independent };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

/// Typed view of a training configuration. Every key of the flat config
/// file maps to one field; see ExperimentConfig::known_keys().
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::parle;
  OracleKind oracle = OracleKind::quadratic;
  DatasetKind dataset = DatasetKind::blobs;

  int blobs_classes = 3;
  int blobs_per_class = 100;
  int blobs_dim = 2;
  double blobs_spread = 0.1;

  std::filesystem::path train_images, train_labels, val_images, val_labels;
  std::filesystem::path train_csv, val_csv;
  std::size_t train_limit = 0;
  std::size_t val_limit = 0;
  // Holdout fraction when the dataset has no designated validation set.
  double val_fraction = 0.2;

  std::vector<std::size_t> hidden;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;

  std::size_t quad_dim = 10;
  double quad_min_eig = 0.5;
  double quad_max_eig = 2.0;
  double quad_noise = 0.0;
  std::size_t rosenbrock_dim = 2;
  // Steps per epoch for analytic oracles, which have no samples.
  std::uint64_t batches_per_epoch = 10;

  HyperParams hp;
  // Per-replica data fraction. Multi-replica algorithms get coverage
  // sharding; single-replica ones train on a random subset.
  double shard_fraction = 1.0;
  std::vector<std::int64_t> lr_drop_epochs;
  double lr_drop_factor = 10.0;
  InitKind init = InitKind::shared;
  double init_scale = 1.0;

  int epochs = 10;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  ExecMode mode = ExecMode::sequential;

  KeyValueConfig source;

  static ExperimentConfig from(const KeyValueConfig& kv);
  static const std::set<std::string>& known_keys();

  std::string canonical() const { return source.canonical(); }
  std::uint64_t hash() const;
};

/// Loss oracle and data a config describes. `quad` and `mlp` alias
/// `oracle` when it has that type.
struct Problem {
  std::shared_ptr<const LossOracle> oracle;
  std::shared_ptr<const QuadraticOracle> quad;
  std::shared_ptr<const MlpOracle> mlp;
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> val;
};

Problem build_problem(const ExperimentConfig& cfg);

struct EpochRow {
  int epoch = 0;
  std::uint64_t step = 0;  // inner-step counter that gamma/rho are computed from
  double wall_seconds = 0.0;
  double train_loss = 0.0;
  std::optional<double> train_error;  // percent
  std::optional<double> val_error;    // percent
  std::optional<double> gamma;
  std::optional<double> rho;
  std::optional<double> collapse;     // max_a |x^a - x|
  std::optional<double> objective;    // exact f(x) for analytic oracles
  std::optional<double> dist_to_opt;  // |x - x*| for quadratics
  std::uint64_t grad_evals = 0;       // cumulative, all replicas
  CommLedger ledger;
};

struct RunRecord {
  Algorithm algorithm = Algorithm::sgd;
  int n = 1;
  std::uint64_t num_params = 0;
  std::uint64_t L = 1;
  std::uint64_t B = 1;
  std::uint64_t seed = 0;
  std::vector<EpochRow> rows;
  CommLedger ledger;
  std::uint64_t grad_evals = 0;
  FlatParams model;
  std::vector<FlatParams> replicas;  // final x^a (empty for single-replica runs)
  std::string config_text;
  std::uint64_t config_hash = 0;
};

/// Where run_experiment writes its artifacts; metrics are appended after
/// every epoch, the summary and model once the run finishes.
struct RunOutput {
  std::filesystem::path dir;
};

RunRecord run_experiment(const ExperimentConfig& cfg, const RunOutput* out = nullptr);

/// (Parle floats per gradient evaluation) / (Elastic-SGD floats per gradient
/// evaluation), as an exact reduced fraction of ledger counts.
struct CommRatio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

CommRatio comm_ratio_exact(const RunRecord& parle, const RunRecord& elastic);
double comm_ratio(const RunRecord& parle, const RunRecord& elastic);

/// Parle and Elastic-SGD on the same quadratic with equal gradient budgets
/// (Parle: `rounds` rounds; Elastic-SGD: rounds * L steps).
struct CommAudit {
  RunRecord parle;
  RunRecord elastic;
  CommRatio ratio;
};

CommAudit comm_audit(int n, std::uint64_t L, std::uint64_t seed, std::uint64_t rounds = 4);

double collapse_metric(std::span<const FlatParams> replicas, const FlatParams& server);
double collapse_metric(std::span<const ReplicaState> replicas, const ServerState& server);

/// Temporal vs spatial averaging on a strongly convex quadratic.
///
/// For each seed an anchor x is drawn; one chain of y <- y - eta'[grad f(y) +
/// (y - x)/gamma] runs `burn_in` steps and then averages its next `count`
/// iterates (temporal); `count` independent chains coupled to the same x
/// run `burn_in` steps and are averaged (spatial). Noise is additive
/// isotropic Gaussian of scale `sigma` on every gradient.
struct EquivalenceOptions {
  std::size_t dim = 5;
  double min_eig = 1.0;
  double max_eig = 2.0;
  double eta_prime = 0.1;
  std::uint64_t burn_in = 400;
  std::uint64_t seed = 0;
  // Use A = I, x* = 0 instead of a random quadratic.
  bool identity = false;
};

struct EquivalenceStats {
  double mean_distance = 0.0;  // mean over seeds of |<y>_temporal - mean_spatial|
  double max_distance = 0.0;
  double max_temporal_to_prox = 0.0;  // distance of each average to the proximal point
  double max_spatial_to_prox = 0.0;
  double max_abs_average = 0.0;  // largest |average| seen, for the large-gamma limit
  std::vector<double> distances;
};

EquivalenceStats equivalence_trial(double gamma, std::uint64_t count, double sigma, int seeds,
                                   const EquivalenceOptions& opts = {});

}  // namespace parle
