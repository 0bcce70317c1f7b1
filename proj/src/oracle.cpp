#include "parle/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "parle/error.hpp"

namespace parle {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const std::vector<double>& a, std::size_t d) {
  return {a.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)};
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace

// ---------------------------------------------------------------------------
// Quadratic

QuadraticOracle::QuadraticOracle(std::vector<double> a, std::vector<double> xstar,
                                 double noise_sigma)
    : a_(std::move(a)), xstar_(std::move(xstar)), noise_sigma_(noise_sigma) {
  const std::size_t d = xstar_.size();
  if (d == 0 || a_.size() != d * d) throw DimensionError("QuadraticOracle: A must be d x d");
  if (!(noise_sigma_ >= 0.0)) throw InvalidArgument("QuadraticOracle: noise sigma must be >= 0");
  const auto m = as_matrix(a_, d);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("QuadraticOracle: A is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  min_eig_ = eig.eigenvalues().minCoeff();
  spectral_norm_ = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (min_eig_ < -1e-12 * std::max(1.0, spectral_norm_)) {
    throw InvalidArgument("QuadraticOracle: A is not positive semidefinite");
  }
}

QuadraticOracle QuadraticOracle::identity(std::size_t d, double noise_sigma) {
  std::vector<double> a(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) a[i * d + i] = 1.0;
  return QuadraticOracle(std::move(a), std::vector<double>(d, 0.0), noise_sigma);
}

QuadraticOracle QuadraticOracle::diagonal(std::vector<double> diag, std::vector<double> xstar) {
  const std::size_t d = diag.size();
  std::vector<double> a(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) a[i * d + i] = diag[i];
  return QuadraticOracle(std::move(a), std::move(xstar));
}

QuadraticOracle QuadraticOracle::random(std::size_t d, Rng& rng, double min_eig, double max_eig,
                                        std::size_t zero_eigs, double xstar_scale) {
  if (d == 0 || min_eig < 0.0 || max_eig < min_eig || zero_eigs > d) {
    throw InvalidArgument("QuadraticOracle::random: bad spectrum request");
  }
  Eigen::MatrixXd g(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(d);
  for (std::size_t i = 0; i < d; ++i) {
    lambda(static_cast<Eigen::Index>(i)) =
        i + zero_eigs >= d ? 0.0 : min_eig + (max_eig - min_eig) * rng.uniform();
  }
  Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose()).eval();
  std::vector<double> flat(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) flat[i * d + j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  std::vector<double> xstar(d);
  for (double& v : xstar) v = xstar_scale * rng.normal();
  return QuadraticOracle(std::move(flat), std::move(xstar));
}

double QuadraticOracle::exact_value_grad(std::span<const double> x, std::span<double> grad) const {
  const std::size_t d = dim();
  if (x.size() != d || grad.size() != d) throw DimensionError("QuadraticOracle: dimension mismatch");
  std::vector<double> r(d);
  for (std::size_t i = 0; i < d; ++i) r[i] = x[i] - xstar_[i];
  double value = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    const double* row = a_.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * r[j];
    grad[i] = s;
    value += r[i] * s;
  }
  return 0.5 * value;
}

double QuadraticOracle::value_grad(std::span<const double> x, std::span<const std::size_t>,
                                   std::span<double> grad, Rng& rng) const {
  const double value = exact_value_grad(x, grad);
  if (noise_sigma_ > 0.0) {
    for (double& g : grad) g += noise_sigma_ * rng.normal();
  }
  return value;
}

QuadraticOracle QuadraticOracle::with_noise(double sigma) const {
  return QuadraticOracle(a_, xstar_, sigma);
}

std::pair<double, FlatParams> quad_value_grad(const QuadraticOracle& o, const FlatParams& x) {
  if (x.size() != o.dim()) throw DimensionError("quad_value_grad: dimension mismatch");
  FlatParams g(x.size());
  const double v = o.exact_value_grad(x.span(), g.span());
  return {v, std::move(g)};
}

FlatParams quad_local_entropy_grad(const QuadraticOracle& o, const FlatParams& x, double gamma) {
  const std::size_t d = o.dim();
  if (x.size() != d) throw DimensionError("quad_local_entropy_grad: dimension mismatch");
  if (!(gamma > 0.0)) throw InvalidArgument("quad_local_entropy_grad: gamma must be > 0");
  const auto a = as_matrix(o.matrix(), d);
  const Eigen::VectorXd r = as_vector(x.span()) - as_vector(o.xstar());
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) + gamma * a;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw NumericError("quad_local_entropy_grad: solve failed");
  const Eigen::VectorXd u = ldlt.solve(r);
  const Eigen::VectorXd g = a * u;
  FlatParams out(x.size());
  for (std::size_t i = 0; i < d; ++i) out[i] = g(static_cast<Eigen::Index>(i));
  if (!out.all_finite()) throw NumericError("quad_local_entropy_grad: non-finite result");
  return out;
}

FlatParams quad_proximal_point(const QuadraticOracle& o, const FlatParams& x, double gamma) {
  const std::size_t d = o.dim();
  if (x.size() != d) throw DimensionError("quad_proximal_point: dimension mismatch");
  if (!(gamma > 0.0)) throw InvalidArgument("quad_proximal_point: gamma must be > 0");
  const auto a = as_matrix(o.matrix(), d);
  const auto id = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd m = a + id / gamma;
  const Eigen::VectorXd rhs = a * as_vector(o.xstar()) + as_vector(x.span()) / gamma;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw NumericError("quad_proximal_point: solve failed");
  const Eigen::VectorXd y = ldlt.solve(rhs);
  FlatParams out(x.size());
  for (std::size_t i = 0; i < d; ++i) out[i] = y(static_cast<Eigen::Index>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Rosenbrock

RosenbrockOracle::RosenbrockOracle(std::size_t d) : d_(d) {
  if (d < 2) throw InvalidArgument("RosenbrockOracle: need d >= 2");
}

double RosenbrockOracle::value_grad(std::span<const double> x, std::span<const std::size_t>,
                                    std::span<double> grad, Rng&) const {
  if (x.size() != d_ || grad.size() != d_) throw DimensionError("RosenbrockOracle: dimension mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  double f = 0.0;
  for (std::size_t i = 0; i + 1 < d_; ++i) {
    const double t = x[i + 1] - x[i] * x[i];
    const double u = 1.0 - x[i];
    f += 100.0 * t * t + u * u;
    grad[i] += -400.0 * x[i] * t - 2.0 * u;
    grad[i + 1] += 200.0 * t;
  }
  return f;
}

// ---------------------------------------------------------------------------
// MLP

struct MlpOracle::Activations {
  // pre[l]: pre-activation output of layer l; post[l]: input to layer l.
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

MlpOracle::MlpOracle(std::vector<std::size_t> layer_sizes, std::shared_ptr<const Dataset> data,
                     double weight_decay, kernels::Backend backend)
    : sizes_(std::move(layer_sizes)), data_(std::move(data)), weight_decay_(weight_decay),
      backend_(backend) {
  if (sizes_.size() < 2) throw InvalidArgument("MlpOracle: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw InvalidArgument("MlpOracle: zero-width layer");
  }
  if (!data_) throw InvalidArgument("MlpOracle: no dataset");
  if (!(weight_decay_ >= 0.0)) throw InvalidArgument("MlpOracle: weight decay must be >= 0");
  if (data_->features != sizes_.front()) {
    throw DimensionError("MlpOracle: dataset has " + std::to_string(data_->features) +
                         " features, network expects " + std::to_string(sizes_.front()));
  }
  if (static_cast<std::size_t>(data_->num_classes) > sizes_.back()) {
    throw DimensionError("MlpOracle: dataset has more classes than network outputs");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) dim_ += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
}

std::vector<Shape> MlpOracle::shapes() const {
  std::vector<Shape> out;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    out.push_back({sizes_[l + 1], sizes_[l]});
    out.push_back({sizes_[l + 1]});
  }
  return out;
}

FlatParams MlpOracle::init_params(Rng& rng) const {
  FlatParams p(shapes());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(sizes_[l]));
    const std::size_t nw = sizes_[l + 1] * sizes_[l];
    for (std::size_t i = 0; i < nw; ++i) p[off + i] = scale * rng.normal();
    off += nw + sizes_[l + 1];
  }
  return p;
}

void MlpOracle::forward(std::span<const double> x, std::span<const double> inputs,
                        std::size_t rows, Activations& act) const {
  if (x.size() != dim_) throw DimensionError("MlpOracle: parameter length mismatch");
  const std::size_t layers = sizes_.size() - 1;
  act.pre.resize(layers);
  act.post.resize(layers);
  act.post[0].assign(inputs.begin(), inputs.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const kernels::DenseDims d{rows, sizes_[l], sizes_[l + 1]};
    const std::size_t nw = d.out * d.in;
    act.pre[l].resize(rows * d.out);
    kernels::dense_forward(backend_, d, act.post[l], x.subspan(off, nw), x.subspan(off + nw, d.out),
                           act.pre[l]);
    off += nw + d.out;
    if (l + 1 < layers) {
      act.post[l + 1].resize(rows * d.out);
      for (std::size_t i = 0; i < act.pre[l].size(); ++i) act.post[l + 1][i] = std::max(0.0, act.pre[l][i]);
    }
  }
}

std::vector<double> MlpOracle::logits(std::span<const double> x, std::span<const double> inputs,
                                      std::size_t rows) const {
  if (inputs.size() != rows * sizes_.front()) throw DimensionError("MlpOracle::logits: input size");
  Activations act;
  forward(x, inputs, rows, act);
  return std::move(act.pre.back());
}

double MlpOracle::value_grad(std::span<const double> x, std::span<const std::size_t> batch,
                             std::span<double> grad, Rng&) const {
  if (batch.empty()) throw InvalidArgument("MlpOracle: empty batch");
  if (grad.size() != dim_) throw DimensionError("MlpOracle: gradient length mismatch");
  const std::size_t rows = batch.size();
  const std::size_t in = sizes_.front();
  const std::size_t classes = sizes_.back();

  std::vector<double> inputs(rows * in);
  for (std::size_t r = 0; r < rows; ++r) {
    if (batch[r] >= data_->size()) throw InvalidArgument("MlpOracle: batch index out of range");
    const auto src = data_->row(batch[r]);
    std::copy(src.begin(), src.end(), inputs.begin() + static_cast<std::ptrdiff_t>(r * in));
  }

  Activations act;
  forward(x, inputs, rows, act);

  // Softmax cross-entropy; delta = (softmax - onehot) / rows.
  const double inv_rows = 1.0 / static_cast<double>(rows);
  std::vector<double> delta = act.pre.back();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double* z = delta.data() + r * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = std::exp(z[c] - zmax);
      sum += z[c];
    }
    const auto y = static_cast<std::size_t>(data_->labels[batch[r]]);
    loss += std::log(sum) + zmax - act.pre.back()[r * classes + y];
    for (std::size_t c = 0; c < classes; ++c) z[c] = z[c] / sum * inv_rows;
    z[y] -= inv_rows;
  }
  loss *= inv_rows;

  // Backward through the layers, last to first.
  const std::size_t layers = sizes_.size() - 1;
  std::vector<std::size_t> offsets(layers);
  for (std::size_t l = 0, off = 0; l < layers; ++l) {
    offsets[l] = off;
    off += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  std::vector<double> next_delta;
  for (std::size_t l = layers; l-- > 0;) {
    const kernels::DenseDims d{rows, sizes_[l], sizes_[l + 1]};
    const std::size_t nw = d.out * d.in;
    kernels::dense_backward_params(backend_, d, act.post[l], delta, grad.subspan(offsets[l], nw),
                                   grad.subspan(offsets[l] + nw, d.out));
    if (l == 0) break;
    next_delta.resize(rows * d.in);
    kernels::dense_backward_input(backend_, d, delta, x.subspan(offsets[l], nw), next_delta);
    // ReLU derivative of the layer below.
    const auto& pre = act.pre[l - 1];
    for (std::size_t i = 0; i < next_delta.size(); ++i) {
      if (pre[i] <= 0.0) next_delta[i] = 0.0;
    }
    delta.swap(next_delta);
  }

  if (weight_decay_ > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      sq += x[i] * x[i];
      grad[i] += weight_decay_ * x[i];
    }
    loss += 0.5 * weight_decay_ * sq;
  }
  return loss;
}

double MlpOracle::error_percent(std::span<const double> x, const Dataset& data) const {
  if (data.features != sizes_.front()) throw DimensionError("MlpOracle::error_percent: feature count");
  if (data.size() == 0) return 0.0;
  constexpr std::size_t kChunk = 256;
  const std::size_t classes = sizes_.back();
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, data.size() - start);
    const auto in = std::span<const double>(data.inputs).subspan(start * data.features, rows * data.features);
    const auto z = logits(x, in, rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto first = z.begin() + static_cast<std::ptrdiff_t>(r * classes);
      const auto pred = static_cast<int>(std::max_element(first, first + static_cast<std::ptrdiff_t>(classes)) - first);
      if (pred != data.labels[start + r]) ++wrong;
    }
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.size());
}

double MlpOracle::mean_loss(std::span<const double> x, const Dataset& data) const {
  if (data.size() == 0) return 0.0;
  constexpr std::size_t kChunk = 256;
  const std::size_t classes = sizes_.back();
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, data.size() - start);
    const auto in = std::span<const double>(data.inputs).subspan(start * data.features, rows * data.features);
    const auto z = logits(x, in, rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* zr = z.data() + r * classes;
      const double zmax = *std::max_element(zr, zr + classes);
      double sum = 0.0;
      for (std::size_t c = 0; c < classes; ++c) sum += std::exp(zr[c] - zmax);
      total += std::log(sum) + zmax - zr[data.labels[start + r]];
    }
  }
  return total / static_cast<double>(data.size());
}

double gradient_check(const LossOracle& oracle, std::span<const double> x,
                      std::span<const std::size_t> batch, const Rng& rng, double h) {
  if (x.size() != oracle.dim()) throw DimensionError("gradient_check: parameter length mismatch");
  if (!(h > 0.0)) throw InvalidArgument("gradient_check: step must be positive");
  std::vector<double> analytic(x.size()), numeric(x.size()), scratch(x.size());
  Rng r = rng;
  oracle.value_grad(x, batch, analytic, r);
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    r = rng;
    const double up = oracle.value_grad(probe, batch, scratch, r);
    probe[i] = keep - h;
    r = rng;
    const double down = oracle.value_grad(probe, batch, scratch, r);
    probe[i] = keep;
    numeric[i] = (up - down) / (2.0 * h);
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
  const double scale = std::max({norm2(analytic), norm2(numeric), 1e-12});
  return std::sqrt(diff) / scale;
}

}  // namespace parle
