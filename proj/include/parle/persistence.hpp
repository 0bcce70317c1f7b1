#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "parle/flat_params.hpp"
#include "parle/harness.hpp"

namespace parle {

// Model files: one line of JSON header (format, num_params, shapes, seed,
// config_hash) terminated by '\n', then num_params little-endian IEEE-754
// doubles.
struct ModelHeader {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

void save_model(const std::filesystem::path& path, const FlatParams& params, const ModelHeader& header);
FlatParams load_model(const std::filesystem::path& path, ModelHeader* header = nullptr);

// One JSON object per epoch; wall-clock time is left out so reruns are
// byte-identical.
std::string metrics_line(const EpochRow& row);
std::string timing_line(const EpochRow& row);
std::string metrics_jsonl(const RunRecord& record);

std::string summary_csv(const RunRecord& record);

std::string hex64(std::uint64_t v);

}  // namespace parle
