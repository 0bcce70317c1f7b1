#include "parle/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parle/error.hpp"
#include "parle/rng.hpp"
#include "parle/vector_ops.hpp"

namespace parle {

namespace {

void require_same_architecture(const FlatParams& a, const FlatParams& b, const char* who) {
  if (a.shapes() != b.shapes()) throw DimensionError(std::string(who) + ": architectures differ");
}

void check_bijection(const std::vector<std::size_t>& p, std::size_t width) {
  if (p.size() != width) throw DimensionError("permutation length does not match layer width");
  std::vector<char> seen(width, 0);
  for (std::size_t v : p) {
    if (v >= width || seen[v]) throw InvalidArgument("layer permutation is not a bijection");
    seen[v] = 1;
  }
}

// Permutes hidden layer l in place of `out`, reading from `in`.
void permute_layer(const std::vector<DenseLayer>& layers, std::size_t l, const std::vector<std::size_t>& p,
                   std::span<const double> in, std::span<double> out) {
  const DenseLayer& cur = layers[l];
  const DenseLayer& next = layers[l + 1];
  for (std::size_t i = 0; i < cur.out; ++i) {
    const std::size_t src = p[i];
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(cur.w_offset + src * cur.in), cur.in,
                out.begin() + static_cast<std::ptrdiff_t>(cur.w_offset + i * cur.in));
    out[cur.b_offset + i] = in[cur.b_offset + src];
  }
  for (std::size_t r = 0; r < next.out; ++r) {
    for (std::size_t i = 0; i < next.in; ++i) {
      out[next.w_offset + r * next.in + i] = in[next.w_offset + r * next.in + p[i]];
    }
  }
}

FlatParams apply_one(const FlatParams& net, const std::vector<DenseLayer>& layers, std::size_t l,
                     const std::vector<std::size_t>& p) {
  FlatParams out = net;
  permute_layer(layers, l, p, net.span(), out.span());
  return out;
}

// Cosine similarity of incoming [W row, bias] vectors, target unit i vs source unit j.
std::vector<double> incoming_cosines(const FlatParams& t, const FlatParams& s, const DenseLayer& ly) {
  auto unit = [&](const FlatParams& net, std::size_t i, std::vector<double>& v) {
    v.assign(net.span().begin() + static_cast<std::ptrdiff_t>(ly.w_offset + i * ly.in),
             net.span().begin() + static_cast<std::ptrdiff_t>(ly.w_offset + (i + 1) * ly.in));
    v.push_back(net[ly.b_offset + i]);
  };
  std::vector<double> c(ly.out * ly.out, 0.0);
  std::vector<double> u, w;
  for (std::size_t i = 0; i < ly.out; ++i) {
    unit(t, i, u);
    const double nu = norm2(u);
    for (std::size_t j = 0; j < ly.out; ++j) {
      unit(s, j, w);
      const double nw = norm2(w);
      if (nu == 0.0 || nw == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * w[k];
      c[i * ly.out + j] = dot / (nu * nw);
    }
  }
  return c;
}

std::vector<std::size_t> greedy_match(const std::vector<double>& c, std::size_t width) {
  std::vector<std::size_t> p(width);
  std::vector<char> used(width, 0);
  for (std::size_t i = 0; i < width; ++i) {
    std::size_t best = width;
    for (std::size_t j = 0; j < width; ++j) {
      if (used[j]) continue;
      if (best == width || c[i * width + j] > c[i * width + best]) best = j;
    }
    used[best] = 1;
    p[i] = best;
  }
  return p;
}

std::vector<std::size_t> exhaustive_match(const std::vector<double>& c, std::size_t width) {
  std::vector<std::size_t> p(width), best;
  std::iota(p.begin(), p.end(), std::size_t{0});
  double best_score = -1e300;
  do {
    double score = 0.0;
    for (std::size_t i = 0; i < width; ++i) score += c[i * width + p[i]];
    if (score > best_score) {
      best_score = score;
      best = p;
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

template <typename Match>
LayerPermutation align_with(const FlatParams& target, const FlatParams& source, Match match) {
  require_same_architecture(target, source, "align");
  const auto layers = dense_layers(target);
  LayerPermutation out;
  FlatParams working = source;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto c = incoming_cosines(target, working, layers[l]);
    out.perm.push_back(match(c, layers[l].out));
    // Later layers see this layer's units in target order.
    working = apply_one(working, layers, l, out.perm.back());
  }
  return out;
}

}  // namespace

std::vector<DenseLayer> dense_layers(const FlatParams& net) {
  const auto& shapes = net.shapes();
  if (shapes.empty() || shapes.size() % 2 != 0) {
    throw DimensionError("dense network needs alternating weight and bias shapes");
  }
  std::vector<DenseLayer> layers;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < shapes.size(); i += 2) {
    const Shape& w = shapes[i];
    const Shape& b = shapes[i + 1];
    if (w.size() != 2 || b.size() != 1 || b[0] != w[0]) {
      throw DimensionError("dense network: layer " + std::to_string(i / 2) + " is not W (out x in), b (out)");
    }
    DenseLayer ly{w[0], w[1], offset, offset + w[0] * w[1]};
    if (!layers.empty() && layers.back().out != ly.in) {
      throw DimensionError("dense network: layer " + std::to_string(i / 2) + " input width mismatch");
    }
    offset += w[0] * w[1] + w[0];
    layers.push_back(ly);
  }
  return layers;
}

LayerPermutation LayerPermutation::identity(const FlatParams& net) {
  LayerPermutation p;
  const auto layers = dense_layers(net);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    p.perm.emplace_back(layers[l].out);
    std::iota(p.perm.back().begin(), p.perm.back().end(), std::size_t{0});
  }
  return p;
}

LayerPermutation LayerPermutation::random(const FlatParams& net, Rng& rng) {
  LayerPermutation p;
  const auto layers = dense_layers(net);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) p.perm.push_back(rng.permutation(layers[l].out));
  return p;
}

LayerPermutation LayerPermutation::inverse() const {
  LayerPermutation inv;
  for (const auto& p : perm) {
    std::vector<std::size_t> q(p.size());
    check_bijection(p, p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[p[i]] = i;
    inv.perm.push_back(std::move(q));
  }
  return inv;
}

FlatParams apply_permutation(const FlatParams& net, const LayerPermutation& p) {
  const auto layers = dense_layers(net);
  if (p.perm.size() + 1 != layers.size()) {
    throw DimensionError("apply_permutation: expected " + std::to_string(layers.size() - 1) +
                         " hidden-layer permutations, got " + std::to_string(p.perm.size()));
  }
  for (std::size_t l = 0; l < p.perm.size(); ++l) check_bijection(p.perm[l], layers[l].out);
  FlatParams out = net;
  for (std::size_t l = 0; l < p.perm.size(); ++l) {
    const FlatParams prev = out;
    permute_layer(layers, l, p.perm[l], prev.span(), out.span());
  }
  return out;
}

LayerPermutation greedy_align(const FlatParams& target, const FlatParams& source) {
  return align_with(target, source, greedy_match);
}

LayerPermutation exhaustive_align(const FlatParams& target, const FlatParams& source) {
  const auto layers = dense_layers(target);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l].out > 8) throw InvalidArgument("exhaustive_align: hidden widths above 8 are not supported");
  }
  return align_with(target, source, exhaustive_match);
}

double overlap(const FlatParams& a, const FlatParams& b) {
  require_same_architecture(a, b, "overlap");
  const auto layers = dense_layers(a);
  double total = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t begin = layers[l].w_offset;
    const std::size_t end = layers[l].b_offset + layers[l].out;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
      throw NumericError("overlap: layer " + std::to_string(l) + " has zero norm, similarity undefined");
    }
    total += std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  }
  return total / static_cast<double>(layers.size());
}

FlatParams average_aligned(std::span<const FlatParams> nets) {
  if (nets.size() < 2) throw InvalidArgument("average_aligned: need at least two networks");
  std::vector<FlatParams> aligned;
  aligned.reserve(nets.size());
  aligned.push_back(nets[0]);
  for (std::size_t i = 1; i < nets.size(); ++i) {
    aligned.push_back(apply_permutation(nets[i], greedy_align(nets[0], nets[i])));
  }
  return vec_avg(std::span<const FlatParams>(aligned));
}

}  // namespace parle
