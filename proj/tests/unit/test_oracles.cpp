#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "parle/dataset.hpp"
#include "parle/error.hpp"
#include "parle/oracle.hpp"

using namespace parle;

namespace {

FlatParams random_point(Rng& rng, std::size_t d, double scale = 1.0) {
  FlatParams x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = scale * rng.normal();
  return x;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST(Quadratic, ValueAndGradient) {
  const auto q = QuadraticOracle::diagonal({1.0, 4.0}, {1.0, -1.0});
  const auto [f, g] = quad_value_grad(q, FlatParams::from({3.0, 0.0}));
  // 1/2 (1 * 2^2 + 4 * 1^2) = 4
  EXPECT_DOUBLE_EQ(f, 4.0);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
}

TEST(Quadratic, RejectsAsymmetricOrIndefinite) {
  EXPECT_THROW(QuadraticOracle({1.0, 0.5, 0.0, 1.0}, {0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(QuadraticOracle({1.0, 0.0, 0.0, -1.0}, {0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(QuadraticOracle({1.0, 0.0, 0.0}, {0.0, 0.0}), DimensionError);
}

TEST(Quadratic, RandomHasRequestedSpectrum) {
  Rng rng(4);
  const auto q = QuadraticOracle::random(12, rng, 0.5, 2.0, 2);
  EXPECT_NEAR(q.min_eigenvalue(), 0.0, 1e-10);
  EXPECT_LE(q.spectral_norm(), 2.0 + 1e-10);
  EXPECT_GE(q.spectral_norm(), 0.5);
}

TEST(Quadratic, NoiseIsZeroMeanWithRequestedScale) {
  const auto q = QuadraticOracle::identity(3, 0.5);
  Rng rng(2);
  std::vector<double> g(3);
  const FlatParams x = FlatParams::from({1.0, 2.0, 3.0});
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    q.value_grad(x.span(), {}, g, rng);
    const double e = g[0] - 1.0;
    s += e;
    s2 += e * e;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.5, 0.01);
}

TEST(Quadratic, GradientCheckIsTight) {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const auto q = QuadraticOracle::random(7, rng, 0.1, 3.0);
    const FlatParams x = random_point(rng, 7);
    EXPECT_LT(gradient_check(q, x.span(), {}, Rng(0)), 1e-8);
  }
}

TEST(Rosenbrock, MinimumAndGradientCheck) {
  const RosenbrockOracle r(5);
  std::vector<double> g(5);
  Rng unused(0);
  const std::vector<double> ones(5, 1.0);
  EXPECT_DOUBLE_EQ(r.value_grad(ones, {}, g, unused), 0.0);
  for (double v : g) EXPECT_DOUBLE_EQ(v, 0.0);
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const FlatParams x = random_point(rng, 5);
    EXPECT_LT(gradient_check(r, x.span(), {}, Rng(0), 1e-5), 1e-6);
  }
  EXPECT_THROW(RosenbrockOracle(1), InvalidArgument);
}

TEST(LocalEntropy, ClosedFormMatchesNumericalIntegration1D) {
  // f(y) = a/2 (y - s)^2; f_gamma(x) = -log int exp(-f(y) - (x - y)^2 / (2 gamma)) dy.
  for (double a : {0.3, 1.0, 2.5}) {
    for (double gamma : {0.1, 1.0, 10.0}) {
      const double s = 0.4;
      const auto q = QuadraticOracle::diagonal({a}, {s});
      auto f_gamma = [&](double x) {
        const double lo = -40.0, hi = 40.0;
        const int steps = 400000;
        const double h = (hi - lo) / steps;
        double acc = 0.0;
        for (int i = 0; i <= steps; ++i) {
          const double y = lo + i * h;
          const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
          acc += w * std::exp(-0.5 * a * (y - s) * (y - s) - (x - y) * (x - y) / (2.0 * gamma));
        }
        return -std::log(acc * h);
      };
      const double x = 1.7, h = 1e-4;
      const double numeric = (f_gamma(x + h) - f_gamma(x - h)) / (2.0 * h);
      const double closed = quad_local_entropy_grad(q, FlatParams::from({x}), gamma)[0];
      EXPECT_NEAR(numeric, closed, 1e-6 * std::max(1.0, std::abs(closed))) << "a=" << a << " gamma=" << gamma;
    }
  }
}

TEST(LocalEntropy, ProximalPointIsStationary) {
  Rng rng(12);
  const auto q = QuadraticOracle::random(6, rng, 0.5, 2.0, 1);
  const FlatParams x = random_point(rng, 6);
  for (double gamma : {0.1, 1.0, 10.0}) {
    const FlatParams y = quad_proximal_point(q, x, gamma);
    const auto [f, g] = quad_value_grad(q, y);
    (void)f;
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g[i] + (y[i] - x[i]) / gamma, 0.0, 1e-12);
    // grad f_gamma = (x - y*) / gamma
    const FlatParams le = quad_local_entropy_grad(q, x, gamma);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(le[i], (x[i] - y[i]) / gamma, 1e-12);
  }
}

TEST(LocalEntropy, IdentityLargeGammaLimit) {
  const auto q = QuadraticOracle::identity(3);
  const FlatParams x = FlatParams::from({5.0, -2.0, 1.0});
  const FlatParams y = quad_proximal_point(q, x, 1e9);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 0.0, 1e-8);
}

namespace {

std::shared_ptr<Dataset> small_blobs(Rng& rng, int classes, int dim, int per_class = 10) {
  return std::make_shared<Dataset>(make_blobs(classes, per_class, dim, 0.5, rng));
}

}  // namespace

TEST(Mlp, ShapesAndDimension) {
  Rng rng(1);
  const MlpOracle m({2, 4, 3}, small_blobs(rng, 3, 2));
  EXPECT_EQ(m.dim(), 2u * 4 + 4 + 4 * 3 + 3);
  const auto shapes = m.shapes();
  ASSERT_EQ(shapes.size(), 4u);
  EXPECT_EQ(shapes[0], (Shape{4, 2}));
  EXPECT_EQ(shapes[1], (Shape{4}));
  EXPECT_EQ(shapes[2], (Shape{3, 4}));
  EXPECT_EQ(shapes[3], (Shape{3}));
  const FlatParams x = m.init_params(rng);
  EXPECT_EQ(x.shapes(), shapes);
  for (std::size_t i = x.offset(1); i < x.offset(2); ++i) EXPECT_EQ(x[i], 0.0);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (const auto& sizes : {std::vector<std::size_t>{2, 4, 3}, std::vector<std::size_t>{5, 7, 6, 4},
                            std::vector<std::size_t>{3, 2}}) {
    auto data = small_blobs(rng, static_cast<int>(sizes.back()), static_cast<int>(sizes.front()));
    const MlpOracle m(sizes, data, 1e-3);
    for (int t = 0; t < 5; ++t) {
      const FlatParams x = m.init_params(rng);
      std::vector<std::size_t> batch = all_indices(data->size());
      rng.shuffle(batch);
      batch.resize(7);
      EXPECT_LT(gradient_check(m, x.span(), batch, Rng(0), 1e-5), 1e-4);
    }
  }
}

TEST(Mlp, SerialAndOmpBackendsAgreeBitwise) {
  Rng rng(30);
  auto data = small_blobs(rng, 4, 9, 40);
  MlpOracle a({9, 16, 4}, data, 1e-4, kernels::Backend::serial);
  MlpOracle b({9, 16, 4}, data, 1e-4, kernels::Backend::omp);
  const FlatParams x = a.init_params(rng);
  const auto batch = all_indices(data->size());
  std::vector<double> ga(a.dim()), gb(b.dim());
  Rng r1(0), r2(0);
  EXPECT_EQ(a.value_grad(x.span(), batch, ga, r1), b.value_grad(x.span(), batch, gb, r2));
  EXPECT_EQ(ga, gb);
  EXPECT_EQ(a.error_percent(x.span()), b.error_percent(x.span()));
}

TEST(Mlp, ErrorPercentOnHandBuiltNetwork) {
  // One linear layer that copies the two features into two class scores.
  auto data = std::make_shared<Dataset>();
  data->name = "tiny";
  data->features = 2;
  data->num_classes = 2;
  data->inputs = {1, 0, 0, 1, 1, 0, 0, 1};
  data->labels = {0, 1, 1, 1};
  const MlpOracle m({2, 2}, data);
  const std::vector<double> x{1, 0, 0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(m.error_percent(x), 25.0);
}

TEST(Mlp, BadBatchesThrow) {
  Rng rng(2);
  auto data = small_blobs(rng, 3, 2);
  const MlpOracle m({2, 3}, data);
  const FlatParams x = m.init_params(rng);
  std::vector<double> g(m.dim());
  const std::vector<std::size_t> empty, out_of_range{data->size()};
  EXPECT_THROW(m.value_grad(x.span(), empty, g, rng), InvalidArgument);
  EXPECT_THROW(m.value_grad(x.span(), out_of_range, g, rng), InvalidArgument);
}
