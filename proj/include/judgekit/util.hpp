#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace judgekit::util {

/// 64-bit FNV-1a. Used wherever a stable, dependency-free content hash is
/// needed (config hashes, synthesis prompt provenance). Not cryptographic.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view data);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, split on non-alphanumeric bytes, drop empty tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Rough token count for prompt budgeting: one token per four bytes,
/// rounded up. Deliberately tokenizer-free so estimates are reproducible.
inline int estimate_tokens_for_size(std::size_t bytes) {
  return static_cast<int>((bytes + 3) / 4);
}

inline int estimate_tokens(std::string_view text) {
  return estimate_tokens_for_size(text.size());
}

/// Deterministic RNG wrapper. All random draws in the library go through
/// these helpers instead of std distributions, whose output is
/// implementation-defined; this keeps seeded runs byte-identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1) with 53 bits of randomness.
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform index in [0, n). n must be >= 1.
  std::size_t uniform_index(std::size_t n) {
    auto idx = static_cast<std::size_t>(next_double() * static_cast<double>(n));
    return idx >= n ? n - 1 : idx;
  }

  /// Fair coin.
  bool coin() { return next_double() < 0.5; }

  std::uint64_t next_raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace judgekit::util
