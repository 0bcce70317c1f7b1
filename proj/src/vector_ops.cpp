#include "parle/vector_ops.hpp"

#include <algorithm>
#include <cmath>

#include "parle/error.hpp"

namespace parle {

void nesterov_step_inplace(std::span<double> params, std::span<double> velocity,
                           std::span<const double> grad, double eta, double mu) {
  if (params.size() != velocity.size() || params.size() != grad.size()) {
    throw DimensionError("nesterov_step: params/velocity/grad lengths differ");
  }
  bool finite = true;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = mu * velocity[i] + grad[i];
    velocity[i] = v;
    params[i] -= eta * (grad[i] + mu * v);
    finite = finite && std::isfinite(params[i]) && std::isfinite(v);
  }
  if (!finite) throw NumericError("nesterov_step: non-finite result");
}

std::pair<FlatParams, FlatParams> nesterov_step(const FlatParams& p, const FlatParams& vel,
                                                const FlatParams& grad, double eta, double mu) {
  if (p.size() != vel.size() || p.size() != grad.size()) {
    throw DimensionError("nesterov_step: params/velocity/grad lengths differ");
  }
  FlatParams p2 = p;
  FlatParams v2 = vel;
  nesterov_step_inplace(p2.span(), v2.span(), grad.span(), eta, mu);
  return {std::move(p2), std::move(v2)};
}

FlatParams vec_avg(std::span<const FlatParams* const> items) {
  if (items.empty()) throw InvalidArgument("vec_avg: empty list");
  FlatParams out = *items.front();
  const std::size_t n = out.size();
  for (const FlatParams* p : items) {
    if (p->size() != n) throw DimensionError("vec_avg: length mismatch");
  }
  const std::size_t count = items.size();
  const double inv = static_cast<double>(count);
  if (count == 1) return out;
  // Summing each coordinate in sorted order makes the result independent of
  // the order of `items`, bit for bit.
  std::vector<double> column(count);
  auto dst = out.span();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < count; ++a) column[a] = (*items[a])[i];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    dst[i] = s / inv;
  }
  if (!out.all_finite()) throw NumericError("vec_avg: non-finite result");
  return out;
}

FlatParams vec_avg(std::span<const FlatParams> items) {
  std::vector<const FlatParams*> ptrs;
  ptrs.reserve(items.size());
  for (const auto& p : items) ptrs.push_back(&p);
  return vec_avg(std::span<const FlatParams* const>(ptrs));
}

}  // namespace parle
