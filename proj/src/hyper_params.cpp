#include "parle/hyper_params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parle/error.hpp"

namespace parle {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidHyperparameter("hyper-parameter check failed: " + what);
}

}  // namespace

void HyperParams::validate() const {
  require(std::isfinite(eta) && eta >= 0.0, "eta >= 0");
  require(std::isfinite(eta_prime) && eta_prime >= 0.0, "eta_prime >= 0");
  require(!eta_dprime || (std::isfinite(*eta_dprime) && *eta_dprime >= 0.0), "eta_dprime >= 0");
  require(gamma0 > 0.0 && !std::isnan(gamma0), "gamma0 > 0");
  require(rho0 > 0.0 && !std::isnan(rho0), "rho0 > 0");
  require(gamma_floor > 0.0 && gamma_floor <= gamma0, "0 < gamma_floor <= gamma0");
  require(rho_floor > 0.0 && rho_floor <= rho0, "0 < rho_floor <= rho0");
  require(L >= 1, "L >= 1");
  require(alpha >= 0.0 && alpha < 1.0, "alpha in [0, 1)");
  require(momentum >= 0.0 && momentum < 1.0, "momentum in [0, 1)");
  require(n_replicas >= 1, "n_replicas >= 1");
  require(B >= 1, "B >= 1");
}

double HyperParams::server_step(double rho) const {
  return eta_dprime ? *eta_dprime : rho / static_cast<double>(n_replicas);
}

double scoping_value(std::uint64_t k, const HyperParams& hp, double v0, double floor) {
  if (hp.B == 0) throw InvalidHyperparameter("scoping_value: B must be >= 1");
  if (hp.L == 0) throw InvalidHyperparameter("scoping_value: L must be >= 1");
  if (!(v0 > 0.0)) throw InvalidHyperparameter("scoping_value: v0 must be > 0");
  if (!(floor > 0.0)) throw InvalidHyperparameter("scoping_value: floor must be > 0");
  const double decay = 1.0 - 1.0 / (2.0 * static_cast<double>(hp.B));
  const auto blocks = static_cast<double>(k / hp.L);
  return std::max(floor, v0 * std::pow(decay, blocks));
}

}  // namespace parle
