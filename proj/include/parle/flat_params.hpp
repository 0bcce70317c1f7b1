#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace parle {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);

/// A flat real parameter vector together with the layer shapes that
/// partition it. The shapes' element counts always sum to size().
class FlatParams {
 public:
  FlatParams() = default;

  // Single flat layer of length n, zero-filled.
  explicit FlatParams(std::size_t n);

  // Zero-filled vector partitioned by `shapes`.
  explicit FlatParams(std::vector<Shape> shapes);

  FlatParams(std::vector<double> data, std::vector<Shape> shapes);

  // Convenience for tests and small examples: one flat layer.
  static FlatParams from(std::vector<double> data);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  const std::vector<Shape>& shapes() const { return shapes_; }

  // Offset of layer `layer` in the flat vector.
  std::size_t offset(std::size_t layer) const;
  std::span<double> layer(std::size_t layer);
  std::span<const double> layer(std::size_t layer) const;

  bool all_finite() const;

  // Same shapes, same length; used to validate binary operations.
  bool same_layout(const FlatParams& other) const;

  friend bool operator==(const FlatParams&, const FlatParams&) = default;

 private:
  std::vector<double> data_;
  std::vector<Shape> shapes_;
};

double norm2(std::span<const double> v);
double distance2(std::span<const double> a, std::span<const double> b);

}  // namespace parle
