#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>

#include "bayesrisk/error.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk {

namespace detail {

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// Deterministic, splittable random stream.
///
/// Bit-exact definition:
///   root key   = splitmix64_mix(seed + 0x9E3779B97F4A7C15) ^ fnv1a64(label)
///   child key  = splitmix64_mix((parent_key ^ fnv1a64(label)) + 0x9E3779B97F4A7C15)
///   state[i]   = splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15), i = 0..3
///   next_u64() = xoshiro256** over state
///   uniform()  = ((next_u64() >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
///   normal()   = AS241 inverse normal CDF applied to uniform()
/// Only integer arithmetic feeds the uniforms, so (seed, label path) pins the
/// sequence on every platform.
class SeededStream {
 public:
  using result_type = std::uint64_t;

  explicit SeededStream(std::uint64_t seed, std::string label = "root")
      : seed_(seed), label_(std::move(label)) {
    require(!label_.empty(), ErrorKind::Precondition, "stream label must be non-empty");
    key_ = detail::splitmix64_mix(seed + 0x9E3779B97F4A7C15ULL) ^ detail::fnv1a64(label_);
    init_state();
  }

  SeededStream derive(std::string_view label) const {
    require(!label.empty(), ErrorKind::Precondition, "derived stream label must be non-empty");
    SeededStream child;
    child.seed_ = seed_;
    child.label_ = label_ + "/" + std::string(label);
    child.key_ = detail::splitmix64_mix((key_ ^ detail::fnv1a64(label)) + 0x9E3779B97F4A7C15ULL);
    child.init_state();
    return child;
  }

  SeededStream derive(std::string_view label, std::uint64_t index) const {
    return derive(std::string(label) + "#" + std::to_string(index));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }
  std::uint64_t key() const noexcept { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const unsigned __int128 prod = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(prod >> 64);
  }

  double normal() { return special::normal_quantile(uniform()); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia-Tsang; shape < 1 boosted through U^(1/shape).
  double gamma(double shape) {
    require(shape > 0.0, ErrorKind::Precondition, "gamma shape must be positive");
    if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  double student_t(double df) {
    const double z = normal();
    const double chi2 = 2.0 * gamma(0.5 * df);
    return z / std::sqrt(chi2 / df);
  }

 private:
  SeededStream() = default;

  void init_state() {
    for (int i = 0; i < 4; ++i) {
      s_[i] = detail::splitmix64_mix(key_ + static_cast<std::uint64_t>(i + 1) * 0x9E3779B97F4A7C15ULL);
    }
  }

  std::uint64_t seed_ = 0;
  std::string label_;
  std::uint64_t key_ = 0;
  std::uint64_t s_[4] = {0, 0, 0, 0};
};

}  // namespace bayesrisk
