#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dsbf {

// xoshiro256** (Blackman & Vigna) seeded through SplitMix64.
//
// The integer stream and uniform() are exact across platforms. normal()
// uses the polar Box-Muller method and therefore inherits the host libm's
// log/sqrt rounding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be positive. Rejection sampled, no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  // Laplace with zero mean and unit variance.
  double laplace() noexcept;

  // Independent child generator for a numbered sub-stream. Depends on the
  // current state, so children derived after advancing differ.
  Rng derive(std::uint64_t stream) const noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace dsbf
