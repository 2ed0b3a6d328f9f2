#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace factorlab {

inline constexpr std::string_view kHashAlgorithm = "sha256";

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Session RNG. The engine is std::mt19937_64; the distributions below are
// written out by hand so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a seed with a stream label so sub-generators are independent.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace factorlab
