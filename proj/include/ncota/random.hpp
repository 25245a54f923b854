#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace ncota {

// Substream derivation. Every random quantity in a simulation is drawn from a
// stream keyed on (master seed, trial, iteration, node, purpose), so results do
// not depend on evaluation order or on how trials are scheduled across threads.

enum class Purpose : std::uint64_t {
  deployment = 1,
  gains,
  channel,
  decision,
  phase,
  noise,
  shift,
  minibatch,
  quantizer,
  labels,
  data,
  oracle,
};

/// Node slot used for streams shared by every node (e.g. the subcarrier shift).
inline constexpr std::uint64_t kSharedNode = ~std::uint64_t{0};

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) noexcept {
  std::uint64_t s = h ^ (v + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

/// xoshiro256** engine. Cheap to seed, so thousands of substreams per
/// iteration cost nothing noticeable. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0) noexcept {
    for (auto& s : state_) s = splitmix64(seed);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  double phase() noexcept { return 2.0 * std::numbers::pi * uniform(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(*this); }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Master seed plus trial index; hands out the keyed substreams of one trial.
struct SeedSpec {
  std::uint64_t master = 0;
  std::uint64_t trial = 0;

  Stream stream(std::uint64_t iteration, std::uint64_t node, Purpose purpose) const noexcept {
    std::uint64_t h = mix_key(0x243f6a8885a308d3ULL, master);
    h = mix_key(h, trial);
    h = mix_key(h, iteration);
    h = mix_key(h, node);
    h = mix_key(h, static_cast<std::uint64_t>(purpose));
    return Stream(h);
  }

  /// Key for an unordered node pair, so (i, j) and (j, i) share a stream.
  static constexpr std::uint64_t pair_key(std::uint64_t i, std::uint64_t j) noexcept {
    const auto lo = i < j ? i : j;
    const auto hi = i < j ? j : i;
    return (hi << 32) | lo;
  }
};

}  // namespace ncota
