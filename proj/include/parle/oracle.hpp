#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "parle/dataset.hpp"
#include "parle/flat_params.hpp"
#include "parle/kernels.hpp"
#include "parle/rng.hpp"

namespace parle {

/// Value and stochastic gradient of a loss f(x).
///
/// Implementations are read-only after construction and may be shared by
/// several worker threads; anything stochastic is drawn from the caller's Rng.
class LossOracle {
 public:
  virtual ~LossOracle() = default;

  virtual std::size_t dim() const = 0;
  virtual std::vector<Shape> shapes() const { return {Shape{dim()}}; }

  // Number of samples mini-batches index into; 0 for analytic losses,
  // which ignore the batch argument.
  virtual std::size_t num_samples() const { return 0; }

  // Writes the gradient into `grad` and returns the loss.
  virtual double value_grad(std::span<const double> x, std::span<const std::size_t> batch,
                            std::span<double> grad, Rng& rng) const = 0;
};

/// f(x) = 1/2 (x - x*)^T A (x - x*), A symmetric PSD. An optional additive
/// isotropic Gaussian term of scale `noise_sigma` models mini-batch noise.
class QuadraticOracle final : public LossOracle {
 public:
  QuadraticOracle(std::vector<double> a, std::vector<double> xstar, double noise_sigma = 0.0);

  static QuadraticOracle identity(std::size_t d, double noise_sigma = 0.0);
  static QuadraticOracle diagonal(std::vector<double> diag, std::vector<double> xstar);

  /// Q diag(lambda) Q^T with Haar-random Q and eigenvalues uniform in
  /// [min_eig, max_eig]; the last `zero_eigs` eigenvalues are exactly 0.
  static QuadraticOracle random(std::size_t d, Rng& rng, double min_eig, double max_eig,
                                std::size_t zero_eigs = 0, double xstar_scale = 1.0);

  std::size_t dim() const override { return xstar_.size(); }
  double value_grad(std::span<const double> x, std::span<const std::size_t> batch,
                    std::span<double> grad, Rng& rng) const override;

  // Noise-free value and gradient.
  double exact_value_grad(std::span<const double> x, std::span<double> grad) const;

  const std::vector<double>& matrix() const { return a_; }
  const std::vector<double>& xstar() const { return xstar_; }
  double noise_sigma() const { return noise_sigma_; }
  double spectral_norm() const { return spectral_norm_; }
  double min_eigenvalue() const { return min_eig_; }

  QuadraticOracle with_noise(double sigma) const;

 private:
  std::vector<double> a_;
  std::vector<double> xstar_;
  double noise_sigma_;
  double spectral_norm_ = 0.0;
  double min_eig_ = 0.0;
};

std::pair<double, FlatParams> quad_value_grad(const QuadraticOracle& o, const FlatParams& x);

/// Exact gradient of the local entropy of a quadratic:
/// A (I + gamma A)^{-1} (x - x*).
FlatParams quad_local_entropy_grad(const QuadraticOracle& o, const FlatParams& x, double gamma);

/// Minimizer of f(y) + |y - x|^2 / (2 gamma):
/// (A + I/gamma)^{-1} (A x* + x/gamma).
FlatParams quad_proximal_point(const QuadraticOracle& o, const FlatParams& x, double gamma);

/// Extended Rosenbrock, sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
class RosenbrockOracle final : public LossOracle {
 public:
  explicit RosenbrockOracle(std::size_t d);
  std::size_t dim() const override { return d_; }
  double value_grad(std::span<const double> x, std::span<const std::size_t> batch,
                    std::span<double> grad, Rng& rng) const override;

 private:
  std::size_t d_;
};

/// Fully connected ReLU network with softmax cross-entropy loss and
/// L2 weight decay (lambda/2) |x|^2 over all parameters.
///
/// Parameters are laid out layer by layer as W (out x in, row-major) then b.
class MlpOracle final : public LossOracle {
 public:
  MlpOracle(std::vector<std::size_t> layer_sizes, std::shared_ptr<const Dataset> data,
            double weight_decay = 0.0, kernels::Backend backend = kernels::Backend::omp);

  std::size_t dim() const override { return dim_; }
  std::vector<Shape> shapes() const override;
  std::size_t num_samples() const override { return data_->size(); }

  double value_grad(std::span<const double> x, std::span<const std::size_t> batch,
                    std::span<double> grad, Rng& rng) const override;

  // He-normal weights, zero biases.
  FlatParams init_params(Rng& rng) const;

  // Class scores for `rows` samples of a row-major input matrix.
  std::vector<double> logits(std::span<const double> x, std::span<const double> inputs,
                             std::size_t rows) const;

  // Classification error in percent on `data` (defaults to the training data).
  double error_percent(std::span<const double> x, const Dataset& data) const;
  double error_percent(std::span<const double> x) const { return error_percent(x, *data_); }

  // Mean cross-entropy (without weight decay) on `data`.
  double mean_loss(std::span<const double> x, const Dataset& data) const;

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  const Dataset& data() const { return *data_; }
  double weight_decay() const { return weight_decay_; }
  void set_backend(kernels::Backend be) { backend_ = be; }

 private:
  struct Activations;
  void forward(std::span<const double> x, std::span<const double> inputs, std::size_t rows,
               Activations& act) const;

  std::vector<std::size_t> sizes_;
  std::shared_ptr<const Dataset> data_;
  double weight_decay_;
  kernels::Backend backend_;
  std::size_t dim_ = 0;
};

/// Largest relative difference, |g - g_fd| / max(|g|, |g_fd|, 1e-12) in the
/// 2-norm, between the analytic gradient and central differences of step
/// `h`, taken at `x` on a fixed batch. The oracle must be deterministic for
/// a fixed Rng; every evaluation uses a copy of `rng`.
double gradient_check(const LossOracle& oracle, std::span<const double> x,
                      std::span<const std::size_t> batch, const Rng& rng, double h = 1e-6);

}  // namespace parle
