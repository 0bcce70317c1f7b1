#pragma once

#include <cstdint>
#include <optional>

namespace parle {

/// Scalar knobs shared by every optimizer in the family.
///
/// `eta` drives the slow variables (x, x^a), `eta_prime` the inner y loop.
/// `eta_dprime` is the server step; when unset the server simply averages
/// the replicas, which is the only tested path.
struct HyperParams {
  double eta = 0.1;
  double eta_prime = 0.1;
  std::optional<double> eta_dprime;
  double gamma0 = 100.0;
  double rho0 = 1.0;
  double gamma_floor = 1.0;
  double rho_floor = 0.1;
  std::uint64_t L = 25;
  double alpha = 0.75;
  double momentum = 0.9;
  int n_replicas = 1;
  // Mini-batches per epoch; sets the annealing rate of gamma and rho.
  std::uint64_t B = 1;

  // Throws InvalidHyperparameter when any field is out of range.
  void validate() const;

  // Server step size for a given rho; rho / n unless overridden.
  double server_step(double rho) const;
};

/// Annealed value after `k` inner steps:
///   max(floor, v0 * (1 - 1/(2B))^floor(k/L)).
/// Constant on each block of L steps and never below `floor`.
double scoping_value(std::uint64_t k, const HyperParams& hp, double v0, double floor);

inline double scoped_gamma(std::uint64_t k, const HyperParams& hp) {
  return scoping_value(k, hp, hp.gamma0, hp.gamma_floor);
}

inline double scoped_rho(std::uint64_t k, const HyperParams& hp) {
  return scoping_value(k, hp, hp.rho0, hp.rho_floor);
}

}  // namespace parle
