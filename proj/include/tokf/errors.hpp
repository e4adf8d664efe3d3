#pragma once

#include <stdexcept>
#include <string>

namespace tokf {

// Shape/extent violations (mismatched matmul operands, bad concat, ...).
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad configuration values (unknown variant, inconsistent model config, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Corpus/data problems (corpus shorter than a sequence, out-of-range token id).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint/file format problems (bad magic, truncation, future version).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (NaN/Inf surfaced, gradient check exceeded).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violations (backward twice, non-scalar loss, ...).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace tokf
