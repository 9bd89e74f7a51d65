#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kFormatVersion = 1;

// Error taxonomy maps onto the CLI exit codes: ConfigError -> 1,
// ArtifactError -> 2, NumericError -> 3.
class TadError : public std::runtime_error {
public:
  explicit TadError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public TadError {
public:
  explicit ConfigError(const std::string& msg) : TadError(msg) {}
};

class ArtifactError : public TadError {
public:
  explicit ArtifactError(const std::string& msg) : TadError(msg) {}
};

class NumericError : public TadError {
public:
  explicit NumericError(const std::string& msg) : TadError(msg) {}
};

// FNV-1a, used for content-derived artifact ids.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 14695981039346656037ull) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::string hex_id(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Shortest exact decimal form; used everywhere a double lands in a CSV so
// reruns stay byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace tad
