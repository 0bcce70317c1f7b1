#include "parle/optimizers.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "parle/error.hpp"
#include "parle/vector_ops.hpp"

namespace parle {

ReplicaState::ReplicaState(FlatParams x0, MiniBatchSampler s, Rng r)
    : x(std::move(x0)), y(x), z(x), vel_x(x.shapes()), vel_y(x.shapes()), sampler(std::move(s)),
      rng(r) {}

std::span<const std::size_t> ReplicaState::next_batch() {
  if (sampler.indices().empty()) return {};
  return sampler.next(rng);
}

double ReplicaState::take_mean_loss() {
  const double m = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
  loss_sum = 0.0;
  loss_count = 0;
  return m;
}

namespace {

// g += inv_scale * (v - anchor). A zero coefficient means no coupling and
// leaves g untouched.
void add_coupling(std::span<double> g, std::span<const double> v, std::span<const double> anchor,
                  double inv_scale) {
  if (inv_scale == 0.0) return;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv_scale * (v[i] - anchor[i]);
}

double inverse(double scale) { return std::isinf(scale) ? 0.0 : 1.0 / scale; }

double checked_grad(const LossOracle& oracle, std::span<const double> at, ReplicaState& s,
                    std::span<double> grad, int replica_id) {
  const double loss = oracle.value_grad(at, s.next_batch(), grad, s.rng);
  if (!std::isfinite(loss)) throw DivergenceError(s.k, replica_id, "non-finite loss");
  s.loss_sum += loss;
  ++s.loss_count;
  return loss;
}

void checked_nesterov(std::span<double> p, std::span<double> v, std::span<const double> g,
                      double eta, double mu, std::uint64_t step, int replica_id) {
  try {
    nesterov_step_inplace(p, v, g, eta, mu);
  } catch (const NumericError& e) {
    throw DivergenceError(step, replica_id, e.what());
  }
}

void require_finite(const FlatParams& p, std::uint64_t step, int replica_id, const char* what) {
  if (!p.all_finite()) throw DivergenceError(step, replica_id, std::string("non-finite ") + what);
}

// Runs body(a) for every replica index, in order or across OpenMP threads.
// Exceptions are collected per replica and the lowest-index one rethrown.
template <typename Body>
void for_each_replica(std::size_t count, ExecMode mode, Body&& body) {
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
  if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < n; ++a) {
      try {
        body(static_cast<std::size_t>(a));
      } catch (...) {
        errors[static_cast<std::size_t>(a)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t a = 0; a < n; ++a) {
      try {
        body(static_cast<std::size_t>(a));
      } catch (...) {
        errors[static_cast<std::size_t>(a)] = std::current_exception();
        break;
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void server_reduce(std::vector<ReplicaState>& replicas, ServerState& server,
                   const HyperParams& hp, double rho) {
  std::vector<const FlatParams*> xs;
  xs.reserve(replicas.size());
  for (const auto& r : replicas) xs.push_back(&r.x);
  FlatParams mean = vec_avg(std::span<const FlatParams* const>(xs));
  if (!hp.eta_dprime) {
    server.x = std::move(mean);
    return;
  }
  // General server step (experimental): x <- x - (eta'' n / rho)(x - mean).
  const double step = *hp.eta_dprime * static_cast<double>(replicas.size()) * inverse(rho);
  for (std::size_t i = 0; i < server.x.size(); ++i) server.x[i] -= step * (server.x[i] - mean[i]);
  require_finite(server.x, server.round, -1, "server parameters");
}

}  // namespace

EpochMetrics sgd_epoch(const LossOracle& oracle, ReplicaState& state, const HyperParams& hp) {
  hp.validate();
  if (state.x.size() != oracle.dim()) throw DimensionError("sgd_epoch: parameter length mismatch");
  std::vector<double> g(oracle.dim());
  const double before_sum = state.loss_sum;
  const std::uint64_t before_count = state.loss_count;
  for (std::uint64_t b = 0; b < hp.B; ++b) {
    checked_grad(oracle, state.x.span(), state, g, -1);
    checked_nesterov(state.x.span(), state.vel_x.span(), g, hp.eta, hp.momentum, state.k, -1);
    ++state.k;
  }
  EpochMetrics m;
  m.train_loss = (state.loss_sum - before_sum) / static_cast<double>(state.loss_count - before_count);
  return m;
}

void proximal_step(const LossOracle& oracle, ReplicaState& s, std::span<const double> anchor,
                   double inv_gamma, double eta, double mu, int replica_id) {
  if (s.y.size() != oracle.dim() || anchor.size() != oracle.dim()) {
    throw DimensionError("proximal_step: parameter length mismatch");
  }
  std::vector<double> g(oracle.dim());
  checked_grad(oracle, s.y.span(), s, g, replica_id);
  add_coupling(g, s.y.span(), anchor, inv_gamma);
  checked_nesterov(s.y.span(), s.vel_y.span(), g, eta, mu, s.k, replica_id);
}

void local_entropy_inner_loop(const LossOracle& oracle, ReplicaState& s, const HyperParams& hp,
                              double gamma, int replica_id) {
  if (s.x.size() != oracle.dim()) throw DimensionError("inner loop: parameter length mismatch");
  const double inv_gamma = inverse(gamma);
  s.y = s.x;
  s.z = s.x;
  s.vel_y = FlatParams(s.x.shapes());
  const std::uint64_t k0 = s.k;
  const double keep = hp.alpha;
  const double mix = 1.0 - hp.alpha;
  for (std::uint64_t j = 0; j < hp.L; ++j) {
    s.k = k0 + j;
    proximal_step(oracle, s, s.x.span(), inv_gamma, hp.eta_prime, hp.momentum, replica_id);
    auto y = s.y.span();
    auto z = s.z.span();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = keep * z[i] + mix * y[i];
  }
  s.k = k0;
}

FlatParams entropy_sgd_cycle(const LossOracle& oracle, ReplicaState& s, const HyperParams& hp) {
  hp.validate();
  if (s.k % hp.L != 0) {
    throw ConsistencyError("entropy_sgd_cycle: step counter " + std::to_string(s.k) +
                           " is not at a cycle start");
  }
  const double gamma = scoped_gamma(s.k, hp);
  local_entropy_inner_loop(oracle, s, hp, gamma, 0);
  std::vector<double> g(s.x.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = s.x[i] - s.z[i];
  checked_nesterov(s.x.span(), s.vel_x.span(), g, hp.eta, hp.momentum, s.k + hp.L - 1, 0);
  s.k += hp.L;
  return s.x;
}

void elastic_sgd_step(const LossOracle& oracle, std::vector<ReplicaState>& replicas,
                      ServerState& server, const HyperParams& hp, CommLedger& ledger,
                      ExecMode mode) {
  hp.validate();
  if (replicas.empty()) throw InvalidArgument("elastic_sgd_step: no replicas");
  const std::uint64_t step = replicas.front().k;
  for (const auto& r : replicas) {
    if (r.k != step) throw ConsistencyError("elastic_sgd_step: replica step counters differ");
    if (r.x.size() != server.x.size()) throw DimensionError("elastic_sgd_step: replica/server size mismatch");
  }
  const double inv_rho = inverse(scoped_rho(server.round * hp.L, hp));

  std::vector<const FlatParams*> xs;
  for (const auto& r : replicas) xs.push_back(&r.x);
  const FlatParams mean = vec_avg(std::span<const FlatParams* const>(xs));
  const FlatParams reference = server.x;

  for_each_replica(replicas.size(), mode, [&](std::size_t a) {
    ReplicaState& s = replicas[a];
    const int id = static_cast<int>(a);
    std::vector<double> g(oracle.dim());
    checked_grad(oracle, s.x.span(), s, g, id);
    add_coupling(g, s.x.span(), reference.span(), inv_rho);
    checked_nesterov(s.x.span(), s.vel_x.span(), g, hp.eta, hp.momentum, s.k, id);
    ++s.k;
  });

  for (std::size_t i = 0; i < server.x.size(); ++i) server.x[i] -= hp.eta * (server.x[i] - mean[i]);
  require_finite(server.x, step, -1, "server parameters");
  ++server.round;
  ledger.charge_reduce(replicas.size(), server.x.size());
  ledger.grad_evals += replicas.size();
}

void parle_round(const LossOracle& oracle, std::vector<ReplicaState>& replicas,
                 ServerState& server, const HyperParams& hp, CommLedger& ledger, ExecMode mode) {
  hp.validate();
  if (replicas.empty()) throw InvalidArgument("parle_round: no replicas");
  const std::uint64_t k = replicas.front().k;
  for (const auto& r : replicas) {
    if (r.k != k || r.k % hp.L != 0) {
      throw ConsistencyError("parle_round: replica step counters are not aligned at a multiple of L");
    }
    if (r.x.size() != server.x.size()) throw DimensionError("parle_round: replica/server size mismatch");
  }
  const double gamma = scoped_gamma(k, hp);
  const double rho = scoped_rho(k, hp);
  const double inv_rho = inverse(rho);
  const FlatParams reference = server.x;

  for_each_replica(replicas.size(), mode, [&](std::size_t a) {
    ReplicaState& s = replicas[a];
    const int id = static_cast<int>(a);
    local_entropy_inner_loop(oracle, s, hp, gamma, id);
    std::vector<double> g(s.x.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = s.x[i] - s.z[i];
    add_coupling(g, s.x.span(), reference.span(), inv_rho);
    checked_nesterov(s.x.span(), s.vel_x.span(), g, hp.eta, hp.momentum, s.k + hp.L - 1, id);
    s.k += hp.L;
  });

  server_reduce(replicas, server, hp, rho);
  ++server.round;
  ledger.charge_reduce(replicas.size(), server.x.size());
  ledger.grad_evals += replicas.size() * hp.L;
}

void sheriff_round(const LossOracle& oracle, SheriffState& st, const HyperParams& hp,
                   CommLedger& ledger, ExecMode mode) {
  hp.validate();
  const std::size_t n = st.deputies.size();
  if (n == 0 || st.workers.size() != n) throw InvalidArgument("sheriff_round: need n deputies with worker groups");
  if (n > 4) throw InvalidArgument("sheriff_round: at most 4 deputies are supported");
  for (const auto& group : st.workers) {
    if (group.size() != n) throw InvalidArgument("sheriff_round: every deputy needs n workers");
  }
  const std::uint64_t k = st.sheriff.round * hp.L;
  const double inv_gamma = inverse(scoped_gamma(k, hp));
  const double inv_rho = inverse(scoped_rho(k, hp));
  const std::size_t dim = st.sheriff.x.size();
  const FlatParams sheriff = st.sheriff.x;

  for (std::uint64_t j = 0; j < hp.L; ++j) {
    std::vector<FlatParams> worker_mean;
    worker_mean.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
      std::vector<const FlatParams*> ys;
      for (const auto& w : st.workers[a]) ys.push_back(&w.y);
      worker_mean.push_back(vec_avg(std::span<const FlatParams* const>(ys)));
    }

    for_each_replica(n * n, mode, [&](std::size_t idx) {
      const std::size_t a = idx / n;
      ReplicaState& w = st.workers[a][idx % n];
      proximal_step(oracle, w, st.deputies[a].x.span(), inv_gamma, hp.eta_prime, hp.momentum,
                    static_cast<int>(idx));
      ++w.k;
    });

    for (std::size_t a = 0; a < n; ++a) {
      FlatParams& xa = st.deputies[a].x;
      const FlatParams& m = worker_mean[a];
      for (std::size_t i = 0; i < dim; ++i) xa[i] -= hp.eta * (xa[i] - m[i]);
      if (inv_rho != 0.0) {
        for (std::size_t i = 0; i < dim; ++i) xa[i] -= hp.eta * inv_rho * (xa[i] - sheriff[i]);
      }
      require_finite(xa, k + j, static_cast<int>(a), "deputy parameters");
      st.deputies[a].k = k + j + 1;
    }
    ledger.charge_reduce(n * n, dim);
    ledger.grad_evals += n * n;
  }

  std::vector<const FlatParams*> xs;
  for (const auto& d : st.deputies) xs.push_back(&d.x);
  st.sheriff.x = vec_avg(std::span<const FlatParams* const>(xs));
  ++st.sheriff.round;
  ledger.charge_reduce(n, dim);
}

std::vector<ReplicaState> make_replicas(const std::vector<FlatParams>& x0,
                                        const std::vector<std::vector<std::size_t>>& shards,
                                        std::size_t batch_size, std::uint64_t seed) {
  if (x0.empty()) throw InvalidArgument("make_replicas: no initial points");
  if (!shards.empty() && shards.size() != x0.size()) throw InvalidArgument("make_replicas: one shard per replica");
  std::vector<ReplicaState> out;
  out.reserve(x0.size());
  for (std::size_t a = 0; a < x0.size(); ++a) {
    MiniBatchSampler sampler;
    if (!shards.empty() && !shards[a].empty()) sampler = MiniBatchSampler(shards[a], batch_size);
    out.emplace_back(x0[a], std::move(sampler), Rng::substream(seed, a));
  }
  return out;
}

SheriffState make_sheriff(const FlatParams& x0, int n, const std::vector<std::size_t>& samples,
                          std::size_t batch_size, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("make_sheriff: n must be >= 1");
  SheriffState st;
  st.sheriff.x = x0;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t a = 0; a < un; ++a) {
    st.deputies.emplace_back(x0, MiniBatchSampler{}, Rng::substream(seed, 1000 + a));
    std::vector<ReplicaState> group;
    for (std::size_t b = 0; b < un; ++b) {
      MiniBatchSampler sampler;
      if (!samples.empty()) sampler = MiniBatchSampler(samples, batch_size);
      group.emplace_back(x0, std::move(sampler), Rng::substream(seed, a * un + b));
    }
    st.workers.push_back(std::move(group));
  }
  return st;
}

}  // namespace parle
