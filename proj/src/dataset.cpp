#include "parle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "parle/error.hpp"

namespace parle {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Dataset::validate() const {
  if (inputs.size() != labels.size() * features) {
    throw FormatError("dataset " + name + ": feature matrix does not match label count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw FormatError("dataset " + name + ": label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

namespace {

std::uint64_t checksum_values(std::span<const double> v, std::uint64_t h) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(v.data()), v.size_bytes()}, h);
}

}  // namespace

Dataset make_blobs(int classes, int per_class, int dim, double spread, Rng& rng) {
  if (classes < 1 || per_class < 1 || dim < 1 || !(spread > 0.0)) {
    throw InvalidArgument("make_blobs: classes, per_class, dim and spread must be positive");
  }
  const auto d = static_cast<std::size_t>(dim);
  std::vector<double> means(static_cast<std::size_t>(classes) * d);
  for (int c = 0; c < classes; ++c) {
    double* m = means.data() + static_cast<std::size_t>(c) * d;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (std::size_t j = 0; j < d; ++j) m[j] = 2.0 * rng.uniform() - 1.0;
      bool separated = true;
      for (int e = 0; e < c && separated; ++e) {
        const double* other = means.data() + static_cast<std::size_t>(e) * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (m[j] - other[j]) * (m[j] - other[j]);
        separated = std::sqrt(s) >= 0.5;
      }
      if (separated) break;
    }
  }

  Dataset out;
  out.name = "blobs";
  out.features = d;
  out.num_classes = classes;
  out.inputs.reserve(static_cast<std::size_t>(classes * per_class) * d);
  out.labels.reserve(static_cast<std::size_t>(classes * per_class));
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      const double* m = means.data() + static_cast<std::size_t>(c) * d;
      for (std::size_t j = 0; j < d; ++j) out.inputs.push_back(m[j] + spread * rng.normal());
      out.labels.push_back(c);
    }
  }
  out.checksum = checksum_values(out.inputs, 0xcbf29ce484222325ULL);
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  if (img.size() < 16) throw FormatError(images.string() + ": truncated IDX header");
  if (be32(img, 0) != kIdxImages) throw FormatError(images.string() + ": bad IDX image magic");
  if (lab.size() < 8) throw FormatError(labels.string() + ": truncated IDX header");
  if (be32(lab, 0) != kIdxLabels) throw FormatError(labels.string() + ": bad IDX label magic");

  const std::size_t count = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  const std::size_t label_count = be32(lab, 4);
  if (count != label_count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels) throw FormatError(images.string() + ": truncated pixel data");
  if (lab.size() < 8 + count) throw FormatError(labels.string() + ": truncated label data");

  const std::size_t keep = limit == 0 ? count : std::min(limit, count);
  Dataset out;
  out.name = images.filename().string();
  out.features = pixels;
  out.inputs.resize(keep * pixels);
  out.labels.resize(keep);
  for (std::size_t i = 0; i < keep * pixels; ++i) out.inputs[i] = img[16 + i] / 255.0;
  int max_label = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    out.labels[i] = lab[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = std::max(10, max_label + 1);
  out.checksum = fnv1a64(lab, fnv1a64(img));
  return out;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t limit) {
  const auto bytes = read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  const auto header = split(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw FormatError(path.string() + ": no 'label' column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset out;
  out.name = path.filename().string();
  out.features = header.size() - 1;
  int max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (limit != 0 && out.size() == limit) break;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[j].size() || cells[j].empty()) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                          cells[j] + "'");
      }
      if (j == label_col) {
        if (v < 0 || v != std::floor(v)) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad label");
        }
        out.labels.push_back(static_cast<int>(v));
        max_label = std::max(max_label, out.labels.back());
      } else {
        out.inputs.push_back(v);
      }
    }
  }
  out.num_classes = max_label + 1;
  out.checksum = fnv1a64(bytes);
  out.validate();
  return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = data.name;
  out.features = data.features;
  out.num_classes = data.num_classes;
  out.inputs.reserve(indices.size() * data.features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.size()) throw InvalidArgument("subset: index out of range");
    const auto r = data.row(i);
    out.inputs.insert(out.inputs.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
  }
  out.checksum = checksum_values(out.inputs, data.checksum);
  return out;
}

std::pair<Dataset, Dataset> holdout_split(const Dataset& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("holdout_split: fraction in (0, 1)");
  auto perm = rng.permutation(data.size());
  const auto val_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  const std::size_t train_count = data.size() - val_count;
  std::span<const std::size_t> all(perm);
  Dataset train = subset(data, all.first(train_count));
  Dataset val = subset(data, all.subspan(train_count));
  train.name = data.name + ":train";
  val.name = data.name + ":val";
  return {std::move(train), std::move(val)};
}

ShardPlan shard(std::size_t samples, int n, double fraction, Rng& rng) {
  if (n < 1) throw InvalidArgument("shard: n must be >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("shard: fraction must be in (0, 1]");
  if (static_cast<double>(n) * fraction < 1.0 - 1e-12) {
    throw InvalidArgument("shard: n * fraction < 1, cannot cover every sample");
  }
  if (samples == 0) throw InvalidArgument("shard: empty dataset");

  const auto target = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(samples) - 1e-9));
  const auto un = static_cast<std::size_t>(n);

  ShardPlan plan;
  plan.n = n;
  plan.fraction = fraction;
  plan.assignment.resize(un);

  const auto perm = rng.permutation(samples);
  for (std::size_t i = 0; i < samples; ++i) plan.assignment[i % un].push_back(perm[i]);

  std::vector<char> held(samples);
  for (auto& part : plan.assignment) {
    std::fill(held.begin(), held.end(), 0);
    for (std::size_t i : part) held[i] = 1;
    if (part.size() < target) {
      const auto pool = rng.permutation(samples);
      for (std::size_t i : pool) {
        if (part.size() == target) break;
        if (!held[i]) {
          held[i] = 1;
          part.push_back(i);
        }
      }
    }
  }
  return plan;
}

ShardPlan shard(const Dataset& data, int n, double fraction, Rng& rng) {
  return shard(data.size(), n, fraction, rng);
}

MiniBatchSampler::MiniBatchSampler(std::vector<std::size_t> indices, std::size_t batch_size)
    : order_(std::move(indices)), batch_size_(batch_size) {
  if (order_.empty()) throw InvalidArgument("MiniBatchSampler: empty index list");
  if (batch_size_ == 0) throw InvalidArgument("MiniBatchSampler: batch size must be >= 1");
  batch_size_ = std::min(batch_size_, order_.size());
}

std::size_t MiniBatchSampler::batches_per_epoch() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::span<const std::size_t> MiniBatchSampler::next(Rng& rng) {
  if (order_.empty()) throw InvalidArgument("MiniBatchSampler: empty index list");
  if (!started_ || cursor_ >= order_.size()) {
    rng.shuffle(order_);
    cursor_ = 0;
    started_ = true;
  }
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  std::span<const std::size_t> batch(order_.data() + cursor_, count);
  cursor_ += count;
  return batch;
}

}  // namespace parle
