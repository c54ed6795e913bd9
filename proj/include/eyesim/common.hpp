#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace eyesim {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr uint32_t kEysmFormatVersion = 1;
inline constexpr uint32_t kEvidFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape/size violations.
struct DimensionError : Error {
  using Error::Error;
};
// NaN/Inf or numerically undefined results (degenerate correlations, diverged training).
struct NumericError : Error {
  using Error::Error;
};
// Bad options, unknown kinds, inconsistent parameter sets.
struct ConfigError : Error {
  using Error::Error;
};
// Invalid data handed to an operation.
struct InputError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

inline void require_dim(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}
inline void require_input(bool cond, const std::string& msg) {
  if (!cond) throw InputError(msg);
}
inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

// FNV-1a, used for config fingerprints embedded in artifacts.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace eyesim
