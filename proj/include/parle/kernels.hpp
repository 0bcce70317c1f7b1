#pragma once

#include <cstddef>
#include <span>

// Dense-layer kernels used by the MLP oracle.
//
// Each kernel exists twice: a serial reference and an OpenMP version that
// splits the outer loop across threads. Every output element is produced by
// the same arithmetic in the same order in both versions, so results are
// bitwise identical for any thread count.
//
// Layouts are row-major: X is rows x in, W is out x in, Y is rows x out.
namespace parle::kernels {

enum class Backend { serial, omp };

struct DenseDims {
  std::size_t rows;
  std::size_t in;
  std::size_t out;
};

namespace serial {

// Y = X W^T + b
void dense_forward(DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);

// dW = dY^T X, db = column sums of dY (both overwritten).
void dense_backward_params(DenseDims d, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db);

// dX = dY W (overwritten).
void dense_backward_input(DenseDims d, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx);

}  // namespace serial

namespace omp {

void dense_forward(DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_params(DenseDims d, std::span<const double> x, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db);
void dense_backward_input(DenseDims d, std::span<const double> dy, std::span<const double> w,
                          std::span<double> dx);

}  // namespace omp

void dense_forward(Backend be, DenseDims d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_params(Backend be, DenseDims d, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dw,
                           std::span<double> db);
void dense_backward_input(Backend be, DenseDims d, std::span<const double> dy,
                          std::span<const double> w, std::span<double> dx);

}  // namespace parle::kernels
