#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace parle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidHyperparameter : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Non-finite value produced by a primitive.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable dataset / model file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Internal invariant broken, e.g. replica step counters out of sync.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t step, int replica, const std::string& what)
      : Error(format(step, replica, what)), step_(step), replica_(replica) {}

  std::uint64_t step() const { return step_; }
  // -1 when the failing update is not owned by a single replica.
  int replica() const { return replica_; }

 private:
  static std::string format(std::uint64_t step, int replica, const std::string& what) {
    std::string msg = "divergence at step " + std::to_string(step);
    if (replica >= 0) msg += " (replica " + std::to_string(replica) + ")";
    return msg + ": " + what;
  }

  std::uint64_t step_;
  int replica_;
};

}  // namespace parle
