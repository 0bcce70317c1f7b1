#pragma once

#include <span>
#include <utility>
#include <vector>

#include "parle/flat_params.hpp"

namespace parle {

/// Nesterov momentum, velocity kept in gradient units:
///   v' = mu * v + g
///   p' = p - eta * (g + mu * v')
/// With mu == 0 this is exactly p - eta * g.
void nesterov_step_inplace(std::span<double> params, std::span<double> velocity,
                           std::span<const double> grad, double eta, double mu);

std::pair<FlatParams, FlatParams> nesterov_step(const FlatParams& p, const FlatParams& vel,
                                                const FlatParams& grad, double eta, double mu);

/// Elementwise arithmetic mean. Each coordinate is summed in sorted order,
/// so the result does not depend on the order of `items`.
FlatParams vec_avg(std::span<const FlatParams> items);
FlatParams vec_avg(std::span<const FlatParams* const> items);

}  // namespace parle
