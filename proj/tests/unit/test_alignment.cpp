#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "parle/alignment.hpp"
#include "parle/dataset.hpp"
#include "parle/error.hpp"
#include "parle/oracle.hpp"

using namespace parle;

namespace {

FlatParams random_net(const std::vector<std::size_t>& sizes, Rng& rng) {
  std::vector<Shape> shapes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    shapes.push_back({sizes[l + 1], sizes[l]});
    shapes.push_back({sizes[l + 1]});
  }
  FlatParams net(shapes);
  for (std::size_t i = 0; i < net.size(); ++i) net[i] = rng.normal();
  return net;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Alignment, DenseLayersValidatesShapes) {
  Rng rng(1);
  const FlatParams net = random_net({3, 5, 2}, rng);
  const auto layers = dense_layers(net);
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(layers[1].in, 5u);
  EXPECT_EQ(layers[1].out, 2u);
  EXPECT_THROW(dense_layers(FlatParams(std::vector<Shape>{{5, 3}, {4}})), DimensionError);
  EXPECT_THROW(dense_layers(FlatParams(std::vector<Shape>{{5, 3}, {5}, {2, 4}, {2}})), DimensionError);
}

TEST(Alignment, IdentityAndInverse) {
  Rng rng(2);
  const FlatParams net = random_net({4, 6, 5, 3}, rng);
  EXPECT_EQ(apply_permutation(net, LayerPermutation::identity(net)), net);
  const LayerPermutation p = LayerPermutation::random(net, rng);
  EXPECT_EQ(apply_permutation(apply_permutation(net, p), p.inverse()), net);
  EXPECT_EQ(p.inverse().inverse(), p);
}

TEST(Alignment, PermutationPreservesNetworkOutputs) {
  Rng rng(3);
  auto data = std::make_shared<Dataset>(make_blobs(3, 10, 4, 0.5, rng));
  const MlpOracle m({4, 9, 7, 3}, data);
  for (int t = 0; t < 20; ++t) {
    const FlatParams net = m.init_params(rng);
    const FlatParams perm = apply_permutation(net, LayerPermutation::random(net, rng));
    const auto a = m.logits(net.span(), data->inputs, data->size());
    const auto b = m.logits(perm.span(), data->inputs, data->size());
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
  }
}

TEST(Alignment, GreedyRecoversPlantedPermutations) {
  Rng rng(4);
  int recovered = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const std::size_t w1 = 4 + rng.index(29), w2 = 4 + rng.index(29);
    const FlatParams net = random_net({6, w1, w2, 3}, rng);
    const LayerPermutation p = LayerPermutation::random(net, rng);
    const FlatParams permuted = apply_permutation(net, p);
    const LayerPermutation found = greedy_align(net, permuted);
    if (found == p.inverse() && apply_permutation(permuted, found) == net) ++recovered;
  }
  EXPECT_EQ(recovered, trials);
}

TEST(Alignment, ExhaustiveAgreesWithGreedyOnPlantedNets) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const FlatParams net = random_net({3, 2 + rng.index(6), 2 + rng.index(6), 2}, rng);
    const FlatParams permuted = apply_permutation(net, LayerPermutation::random(net, rng));
    EXPECT_EQ(exhaustive_align(net, permuted), greedy_align(net, permuted));
  }
  const FlatParams wide = random_net({2, 9, 2}, rng);
  EXPECT_THROW(exhaustive_align(wide, wide), InvalidArgument);
}

TEST(Alignment, ExhaustiveIsNoWorseThanGreedyOnNoisyNets) {
  // One hidden layer: compare the summed unit cosine each matcher achieves.
  auto unit_cosines = [](const FlatParams& a, const FlatParams& b) {
    const std::size_t out = a.shapes()[0][0], in = a.shapes()[0][1];
    double total = 0.0;
    for (std::size_t i = 0; i < out; ++i) {
      double dot = a[out * in + i] * b[out * in + i];
      double na = a[out * in + i] * a[out * in + i], nb = b[out * in + i] * b[out * in + i];
      for (std::size_t j = 0; j < in; ++j) {
        dot += a[i * in + j] * b[i * in + j];
        na += a[i * in + j] * a[i * in + j];
        nb += b[i * in + j] * b[i * in + j];
      }
      total += dot / std::sqrt(na * nb);
    }
    return total;
  };
  Rng rng(6);
  int strictly_better = 0;
  for (int t = 0; t < 200; ++t) {
    const FlatParams a = random_net({3, 6, 2}, rng);
    const FlatParams b = random_net({3, 6, 2}, rng);
    const double g = unit_cosines(a, apply_permutation(b, greedy_align(a, b)));
    const double e = unit_cosines(a, apply_permutation(b, exhaustive_align(a, b)));
    EXPECT_GE(e, g - 1e-12);
    if (e > g + 1e-12) ++strictly_better;
  }
  EXPECT_GT(strictly_better, 0);
}

TEST(Overlap, SelfNegatedAndZero) {
  Rng rng(7);
  const FlatParams net = random_net({3, 5, 2}, rng);
  EXPECT_EQ(overlap(net, net), 1.0);
  FlatParams neg = net;
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
  EXPECT_DOUBLE_EQ(overlap(net, neg), -1.0);
  FlatParams zero(net.shapes());
  EXPECT_THROW(overlap(net, zero), NumericError);
  EXPECT_THROW(overlap(net, random_net({3, 4, 2}, rng)), DimensionError);
}

TEST(Overlap, InvariantUnderSharedPermutation) {
  Rng rng(8);
  const FlatParams a = random_net({4, 7, 3}, rng);
  const FlatParams b = random_net({4, 7, 3}, rng);
  const LayerPermutation p = LayerPermutation::random(a, rng);
  EXPECT_NEAR(overlap(a, b), overlap(apply_permutation(a, p), apply_permutation(b, p)), 1e-12);
}

TEST(AverageAligned, RecoversPermutedCopies) {
  Rng rng(9);
  const FlatParams net = random_net({3, 8, 4}, rng);
  std::vector<FlatParams> nets{net};
  for (int i = 0; i < 3; ++i) nets.push_back(apply_permutation(net, LayerPermutation::random(net, rng)));
  const FlatParams avg = average_aligned(nets);
  EXPECT_LT(max_abs_diff(avg.span(), net.span()), 1e-12);
  EXPECT_THROW(average_aligned(std::span<const FlatParams>(nets.data(), 1)), InvalidArgument);
}
