// Shared basics: scalar type, error taxonomy, small helpers.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lab {

#ifdef LAB_USE_FLOAT32
using real = float;
inline constexpr const char* kRealName = "f32";
#else
using real = double;
inline constexpr const char* kRealName = "f64";
#endif

// Error taxonomy. The C API maps these onto process exit codes:
// ConfigError->2, IoError->3, NumericError->4, DataError->5, Error->1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline bool all_finite(const std::vector<real>& v) {
  for (real x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace lab
