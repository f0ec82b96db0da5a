#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace pmvge {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data or files.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numeric failure at runtime (overflow, degenerate likelihood, non-convergence).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Bad arguments / unusable configuration.
struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

inline bool is_finite(double v) { return std::isfinite(v); }

using ViewId = int;  // 1..D
using NodeId = int;  // dense 0..n-1, assigned in node-file order

}  // namespace pmvge
