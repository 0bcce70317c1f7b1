#pragma once

#include <cstdint>

namespace parle {

/// Exact counts of real numbers exchanged with the parameter server.
struct CommLedger {
  std::uint64_t floats_up = 0;    // replica -> server
  std::uint64_t floats_down = 0;  // server -> replica
  std::uint64_t reduce_events = 0;
  std::uint64_t grad_evals = 0;

  // One reduce + broadcast among `participants` copies of `params` reals.
  void charge_reduce(std::uint64_t participants, std::uint64_t params) {
    floats_up += participants * params;
    floats_down += participants * params;
    ++reduce_events;
  }

  friend bool operator==(const CommLedger&, const CommLedger&) = default;
};

}  // namespace parle
