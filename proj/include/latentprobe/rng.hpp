#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string_view>

namespace latentprobe {

/// Mixes a 64-bit word (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over the bytes of a label.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Key of the stream named `label` under `master_seed`.
constexpr std::uint64_t derive_stream_key(std::uint64_t master_seed, std::string_view label) {
  return mix64(master_seed ^ mix64(fnv1a64(label) + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based random stream addressed by (master seed, label).
///
/// Word i of a stream is mix64(key + i * golden_gamma), so any labelled stream
/// can be regenerated in isolation and the output does not depend on the
/// standard library implementation. Normal deviates use Box-Muller.
/// Satisfies UniformRandomBitGenerator.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  SeededRng(std::uint64_t master_seed, std::string_view stream_label)
      : key_(derive_stream_key(master_seed, stream_label)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal deviate.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_;
};

}  // namespace latentprobe

namespace latentprobe {

/// Fisher-Yates shuffle driven by SeededRng::below, so the resulting order is
/// identical on every standard library.
template <typename RandomIt>
void seeded_shuffle(RandomIt first, RandomIt last, SeededRng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace latentprobe
