#include "parle/flat_params.hpp"

#include <cmath>
#include <numeric>

#include "parle/error.hpp"

namespace parle {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::size_t total_count(const std::vector<Shape>& shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) n += element_count(s);
  return n;
}

}  // namespace

FlatParams::FlatParams(std::size_t n) : data_(n, 0.0), shapes_{Shape{n}} {}

FlatParams::FlatParams(std::vector<Shape> shapes)
    : data_(total_count(shapes), 0.0), shapes_(std::move(shapes)) {}

FlatParams::FlatParams(std::vector<double> data, std::vector<Shape> shapes)
    : data_(std::move(data)), shapes_(std::move(shapes)) {
  if (total_count(shapes_) != data_.size()) {
    throw DimensionError("FlatParams: shapes hold " + std::to_string(total_count(shapes_)) +
                         " elements but data has " + std::to_string(data_.size()));
  }
  if (!all_finite()) throw NumericError("FlatParams: non-finite entry");
}

FlatParams FlatParams::from(std::vector<double> data) {
  const std::size_t n = data.size();
  return FlatParams(std::move(data), {Shape{n}});
}

std::size_t FlatParams::offset(std::size_t layer) const {
  if (layer > shapes_.size()) throw DimensionError("FlatParams: layer index out of range");
  std::size_t off = 0;
  for (std::size_t i = 0; i < layer; ++i) off += element_count(shapes_[i]);
  return off;
}

std::span<double> FlatParams::layer(std::size_t l) {
  if (l >= shapes_.size()) throw DimensionError("FlatParams: layer index out of range");
  return std::span<double>(data_).subspan(offset(l), element_count(shapes_[l]));
}

std::span<const double> FlatParams::layer(std::size_t l) const {
  if (l >= shapes_.size()) throw DimensionError("FlatParams: layer index out of range");
  return std::span<const double>(data_).subspan(offset(l), element_count(shapes_[l]));
}

bool FlatParams::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool FlatParams::same_layout(const FlatParams& other) const {
  return data_.size() == other.data_.size() && shapes_ == other.shapes_;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double distance2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("distance2: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace parle
