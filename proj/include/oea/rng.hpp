// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic PRNG used by every randomized component.
//
// The generator is the splitmix64 finalizer applied to (key + i * GOLDEN),
// i.e. a pure counter stream: draw i depends only on (key, i), never on how
// many values other streams consumed. Stream keys are derived by folding the
// caller's identifiers (seed, step, layer, token, tag) through the same
// finalizer, so e.g. the scores of token 3 at step 7 are identical no matter
// which steps were generated before it or on which thread.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace oea {

namespace detail {

// splitmix64 finalizer (Steele, Lea, Flood; public-domain reference constants).
inline std::uint64_t splitmix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace detail

/// Folds a list of 64-bit identifiers into one stream key.
inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x853C49E6748FEA9BULL;
  for (std::uint64_t p : parts) {
    h = detail::splitmix64(h + detail::kGolden + p);
  }
  return h;
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  CounterRng(std::uint64_t seed, std::uint64_t step, std::uint64_t layer,
             std::uint64_t token, std::uint64_t tag = 0)
      : key_(stream_key({seed, step, layer, token, tag})) {}

  std::uint64_t next_u64() {
    ++counter_;
    return detail::splitmix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform double in (0, 1]; never 0, so it is safe under log().
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; draws are cached in pairs.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double next_exponential() { return -std::log(next_unit()); }

  /// Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by boosting.
  double next_gamma(double alpha) {
    if (!(alpha > 0.0)) {
      throw std::invalid_argument("next_gamma: alpha must be > 0");
    }
    if (alpha < 1.0) {
      const double u = next_unit();
      return next_gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = next_normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = next_unit();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Multiply-shift bounded draw; bias is < 2^-64 * n, negligible here.
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace oea
