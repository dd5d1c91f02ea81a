#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace magdiff {

/// SplitMix64 (Steele, Lea & Flood): 64-bit state, state += 0x9E3779B97F4A7C15
/// per draw followed by the standard xor-shift-multiply finalizer. Every
/// random quantity in the project derives from this generator, so results
/// are bit-reproducible across platforms and standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by multiply-shift on 64-bit draws (Lemire);
  /// the rejection-free variant keeps the draw count fixed per call.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal by Box-Muller; the paired value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Independent child stream keyed by `index`; children of one parent with
  /// distinct indices never share state sequences in practice.
  Rng split(std::uint64_t index) const {
    Rng mix(state_ ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return Rng(mix.next_u64());
  }

  template <typename T>
  std::vector<T> normal_vector(std::size_t n, double stddev = 1.0) {
    std::vector<T> out(n);
    for (auto& v : out) v = static_cast<T>(stddev * normal());
    return out;
  }

  template <typename T>
  std::vector<T> uniform_vector(std::size_t n, double lo, double hi) {
    std::vector<T> out(n);
    for (auto& v : out) v = static_cast<T>(uniform(lo, hi));
    return out;
  }

  template <typename Container>
  void shuffle(Container& c) {
    for (std::size_t i = c.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(c[i - 1], c[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace magdiff
