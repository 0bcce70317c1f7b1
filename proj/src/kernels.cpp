#include "parle/kernels.hpp"

#include "parle/error.hpp"

namespace parle::kernels {

namespace {

void check(DenseDims d, std::size_t x, std::size_t w, std::size_t y) {
  if (x != d.rows * d.in || w != d.out * d.in || y != d.rows * d.out) {
    throw DimensionError("dense kernel: buffer sizes do not match dims");
  }
}

// Four interleaved partial sums, combined in a fixed order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void forward_row(DenseDims d, const double* x, const double* w, const double* b,
                        double* y, std::size_t r) {
  const double* xr = x + r * d.in;
  double* yr = y + r * d.out;
  for (std::size_t o = 0; o < d.out; ++o) yr[o] = b[o] + dot(xr, w + o * d.in, d.in);
}

inline void params_row(DenseDims d, const double* x, const double* dy, double* dw, double* db,
                       std::size_t o) {
  double* dwo = dw + o * d.in;
  for (std::size_t i = 0; i < d.in; ++i) dwo[i] = 0.0;
  double bsum = 0.0;
  for (std::size_t r = 0; r < d.rows; ++r) {
    const double g = dy[r * d.out + o];
    bsum += g;
    if (g == 0.0) continue;
    const double* xr = x + r * d.in;
    for (std::size_t i = 0; i < d.in; ++i) dwo[i] += g * xr[i];
  }
  db[o] = bsum;
}

inline void input_row(DenseDims d, const double* dy, const double* w, double* dx, std::size_t r) {
  double* dxr = dx + r * d.in;
  for (std::size_t i = 0; i < d.in; ++i) dxr[i] = 0.0;
  for (std::size_t o = 0; o < d.out; ++o) {
    const double g = dy[r * d.out + o];
    if (g == 0.0) continue;
    const double* wo = w + o * d.in;
    for (std::size_t i = 0; i < d.in; ++i) dxr[i] += g * wo[i];
  }
}

}  // namespace

namespace serial {

void dense_forward(DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  check(d, x.size(), w.size(), y.size());
  if (b.size() != d.out) throw DimensionError("dense_forward: bias size");
  for (std::size_t r = 0; r < d.rows; ++r) forward_row(d, x.data(), w.data(), b.data(), y.data(), r);
}

void dense_backward_params(DenseDims d, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db) {
  check(d, x.size(), dw.size(), dy.size());
  if (db.size() != d.out) throw DimensionError("dense_backward_params: bias size");
  for (std::size_t o = 0; o < d.out; ++o) params_row(d, x.data(), dy.data(), dw.data(), db.data(), o);
}

void dense_backward_input(DenseDims d, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx) {
  check(d, dx.size(), w.size(), dy.size());
  for (std::size_t r = 0; r < d.rows; ++r) input_row(d, dy.data(), w.data(), dx.data(), r);
}

}  // namespace serial

namespace omp {

void dense_forward(DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  check(d, x.size(), w.size(), y.size());
  if (b.size() != d.out) throw DimensionError("dense_forward: bias size");
  const auto rows = static_cast<std::ptrdiff_t>(d.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    forward_row(d, x.data(), w.data(), b.data(), y.data(), static_cast<std::size_t>(r));
  }
}

void dense_backward_params(DenseDims d, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db) {
  check(d, x.size(), dw.size(), dy.size());
  if (db.size() != d.out) throw DimensionError("dense_backward_params: bias size");
  const auto outs = static_cast<std::ptrdiff_t>(d.out);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < outs; ++o) {
    params_row(d, x.data(), dy.data(), dw.data(), db.data(), static_cast<std::size_t>(o));
  }
}

void dense_backward_input(DenseDims d, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx) {
  check(d, dx.size(), w.size(), dy.size());
  const auto rows = static_cast<std::ptrdiff_t>(d.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    input_row(d, dy.data(), w.data(), dx.data(), static_cast<std::size_t>(r));
  }
}

}  // namespace omp

void dense_forward(Backend be, DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  if (be == Backend::omp) return omp::dense_forward(d, x, w, b, y);
  serial::dense_forward(d, x, w, b, y);
}

void dense_backward_params(Backend be, DenseDims d, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dw,
                           std::span<double> db) {
  if (be == Backend::omp) return omp::dense_backward_params(d, x, dy, dw, db);
  serial::dense_backward_params(d, x, dy, dw, db);
}

void dense_backward_input(Backend be, DenseDims d, std::span<const double> dy,
                          std::span<const double> w, std::span<double> dx) {
  if (be == Backend::omp) return omp::dense_backward_input(d, dy, w, dx);
  serial::dense_backward_input(d, dy, w, dx);
}

}  // namespace parle::kernels
