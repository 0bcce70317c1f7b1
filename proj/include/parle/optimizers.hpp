#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "parle/comm_ledger.hpp"
#include "parle/dataset.hpp"
#include "parle/flat_params.hpp"
#include "parle/hyper_params.hpp"
#include "parle/oracle.hpp"
#include "parle/rng.hpp"

namespace parle {

enum class ExecMode { sequential, parallel };

/// Everything one replica owns: the slow variable x (x^a), the inner
/// variable y with its exponential average z, one momentum buffer for each
/// of x and y, its mini-batch stream and its random stream.
struct ReplicaState {
  FlatParams x;
  FlatParams y;
  FlatParams z;
  FlatParams vel_x;
  FlatParams vel_y;
  std::uint64_t k = 0;  // inner steps taken
  MiniBatchSampler sampler;  // empty for analytic oracles
  Rng rng;

  // Running training loss, reset by whoever reports it.
  double loss_sum = 0.0;
  std::uint64_t loss_count = 0;

  ReplicaState() = default;
  ReplicaState(FlatParams x0, MiniBatchSampler sampler, Rng rng);

  std::span<const std::size_t> next_batch();
  double take_mean_loss();
};

/// The reference variable held by the parameter server.
struct ServerState {
  FlatParams x;
  std::uint64_t round = 0;  // reduce events so far
};

/// Two-level hierarchy: `workers[a]` are coupled to deputy `deputies[a]`
/// through gamma, deputies to the sheriff through rho. Workers keep their
/// variable in `y` / `vel_y`; deputies use `x`.
struct SheriffState {
  std::vector<ReplicaState> deputies;
  std::vector<std::vector<ReplicaState>> workers;
  ServerState sheriff;
};

struct EpochMetrics {
  double train_loss = 0.0;
};

/// One epoch (hp.B steps) of SGD with Nesterov momentum on state.x.
EpochMetrics sgd_epoch(const LossOracle& oracle, ReplicaState& state, const HyperParams& hp);

/// One step of y <- y - eta [grad f(y) + (y - anchor)/gamma] with Nesterov
/// momentum on vel_y; `inv_gamma` == 0 drops the proximal term.
void proximal_step(const LossOracle& oracle, ReplicaState& state, std::span<const double> anchor,
                   double inv_gamma, double eta, double mu, int replica_id);

/// L inner steps on y anchored at `anchor`, as used by Entropy-SGD and Parle:
///   y <- y - eta' [grad f(y) + (y - anchor)/gamma]   (Nesterov on vel_y)
///   z <- alpha z + (1 - alpha) y
/// y and z start from the anchor and vel_y from zero.
void local_entropy_inner_loop(const LossOracle& oracle, ReplicaState& state,
                              const HyperParams& hp, double gamma, int replica_id);

/// One Entropy-SGD cycle: inner loop, then x <- x - eta (x - z).
/// Requires state.k to be a multiple of L. Returns the new x.
FlatParams entropy_sgd_cycle(const LossOracle& oracle, ReplicaState& state, const HyperParams& hp);

/// One synchronous Elastic-SGD step: every replica takes
///   x^a <- x^a - eta [grad f(x^a) + (x^a - x)/rho]
/// and the server takes x <- x - eta (x - mean_a x^a), all from the
/// pre-step values. rho advances one scoping tick per step.
void elastic_sgd_step(const LossOracle& oracle, std::vector<ReplicaState>& replicas,
                      ServerState& server, const HyperParams& hp, CommLedger& ledger,
                      ExecMode mode = ExecMode::sequential);

/// One Parle round: L inner steps per replica, then
///   x^a <- x^a - eta (x^a - z^a) - (eta/rho) (x^a - x)   (Nesterov on vel_x)
/// and the server update. With the default server step (rho/n) the server
/// simply averages the updated replicas. gamma and rho advance one scoping
/// tick per round.
void parle_round(const LossOracle& oracle, std::vector<ReplicaState>& replicas,
                 ServerState& server, const HyperParams& hp, CommLedger& ledger,
                 ExecMode mode = ExecMode::sequential);

/// One round of the sheriff/deputies hierarchy: L synchronous steps where
/// workers descend f(y) + |y - x^a|^2/(2 gamma) and each deputy takes
///   x^a <- x^a - eta (x^a - mean_b y^b) - (eta/rho) (x^a - x),
/// then the sheriff averages the deputies.
void sheriff_round(const LossOracle& oracle, SheriffState& state, const HyperParams& hp,
                   CommLedger& ledger, ExecMode mode = ExecMode::sequential);

// Initial states. Replica a starts from x0[a] and draws from
// Rng::substream(seed, a); an empty shard list means an analytic oracle.
std::vector<ReplicaState> make_replicas(const std::vector<FlatParams>& x0,
                                        const std::vector<std::vector<std::size_t>>& shards,
                                        std::size_t batch_size, std::uint64_t seed);

SheriffState make_sheriff(const FlatParams& x0, int n,
                          const std::vector<std::size_t>& samples, std::size_t batch_size,
                          std::uint64_t seed);

}  // namespace parle
