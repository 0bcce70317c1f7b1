#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parle/rng.hpp"

namespace parle {

/// Classification dataset held as a dense row-major feature matrix.
struct Dataset {
  std::string name;
  std::size_t features = 0;
  int num_classes = 0;
  std::vector<double> inputs;  // size() * features
  std::vector<int> labels;
  // FNV-1a over the source bytes (files) or the generated values.
  std::uint64_t checksum = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * features, features);
  }

  // Throws FormatError if labels are out of range or the matrix is ragged.
  void validate() const;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Gaussian blobs: class means drawn uniformly in [-1, 1]^dim and redrawn
/// until at least 0.5 apart (when feasible), samples = mean + spread * N(0, I).
Dataset make_blobs(int classes, int per_class, int dim, double spread, Rng& rng);

/// IDX image/label pair (big-endian, magic 2051 / 2049). Pixels are scaled
/// to [0, 1]; only the first `limit` samples are kept (0 keeps all).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

/// CSV with a header row; the column named "label" holds integer class ids,
/// every other column is a numeric feature.
Dataset load_csv(const std::filesystem::path& path, std::size_t limit = 0);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Seeded shuffle, last `fraction` of the rows become the validation set.
std::pair<Dataset, Dataset> holdout_split(const Dataset& data, double fraction, Rng& rng);

/// Per-replica sample assignment for split-data training.
struct ShardPlan {
  int n = 1;
  double fraction = 1.0;
  std::vector<std::vector<std::size_t>> assignment;

  std::size_t shard_size() const { return assignment.empty() ? 0 : assignment.front().size(); }
};

/// Coverage-guaranteed sharding of `samples` indices into `n` shards of
/// ceil(fraction * samples) distinct indices each. A random permutation is
/// dealt round-robin (every index lands somewhere), then each shard is
/// padded with further random indices it does not yet hold.
ShardPlan shard(std::size_t samples, int n, double fraction, Rng& rng);
ShardPlan shard(const Dataset& data, int n, double fraction, Rng& rng);

/// Mini-batches drawn without replacement within an epoch; the index list
/// is reshuffled at the start of every epoch using the caller's stream.
class MiniBatchSampler {
 public:
  MiniBatchSampler() = default;
  MiniBatchSampler(std::vector<std::size_t> indices, std::size_t batch_size);

  std::span<const std::size_t> next(Rng& rng);

  std::size_t batches_per_epoch() const;
  std::size_t batch_size() const { return batch_size_; }
  const std::vector<std::size_t>& indices() const { return order_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_ = 1;
  std::size_t cursor_ = 0;
  bool started_ = false;
};

}  // namespace parle
