#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "parle/flat_params.hpp"
#include "parle/rng.hpp"

namespace parle {

/// Fully connected network stored as FlatParams with shapes
/// [W_0 (out x in), b_0 (out), W_1, b_1, ...]; the layout MlpOracle uses.
struct DenseLayer {
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
};

// Throws DimensionError unless the shapes describe a chain of dense layers.
std::vector<DenseLayer> dense_layers(const FlatParams& net);

/// One permutation per hidden layer. Unit i of the permuted layer is unit
/// perm[l][i] of the original.
struct LayerPermutation {
  std::vector<std::vector<std::size_t>> perm;

  static LayerPermutation identity(const FlatParams& net);
  static LayerPermutation random(const FlatParams& net, Rng& rng);
  LayerPermutation inverse() const;
  bool operator==(const LayerPermutation&) const = default;
};

/// Permutes rows of W_l and b_l and the matching columns of W_{l+1}; the
/// network computes the same function.
FlatParams apply_permutation(const FlatParams& net, const LayerPermutation& p);

/// Layer by layer from the input, each target unit in index order takes
/// the unused source unit whose incoming [weights, bias] has the highest
/// cosine similarity to its own; ties go to the lowest source index.
/// apply_permutation(source, result) is the aligned source.
LayerPermutation greedy_align(const FlatParams& target, const FlatParams& source);

/// Same layer-wise scheme, but each layer picks the permutation with the
/// largest total cosine similarity by enumeration. Widths up to 8 only.
LayerPermutation exhaustive_align(const FlatParams& target, const FlatParams& source);

/// Mean over layers of the cosine similarity between the flattened
/// [W_l, b_l] of a and b (no alignment is applied here). Throws
/// NumericError if a layer has zero norm.
double overlap(const FlatParams& a, const FlatParams& b);

/// Aligns every net to the first with greedy_align, then averages.
FlatParams average_aligned(std::span<const FlatParams> nets);

}  // namespace parle
