#pragma once

#include <cmath>
#include <cstdint>

#include "tokf/errors.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

// SplitMix64 counter generator. The u64 and uniform streams are bit-identical
// for a given seed on every platform; gaussians go through Box-Muller and are
// identical wherever libm's log/cos round the same way (always true within one
// platform, which is what the determinism tests compare).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1]: 53 mantissa bits, never zero (Box-Muller takes log of it).
  double next_uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform in [0, 1).
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform_pos();
    const double u2 = next_uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Gaussian tensor with the given mean/std; std = 0 yields the constant tensor.
template <class T>
Tensor<T> randn(Rng& rng, std::vector<std::int64_t> shape, T mean = T(0), T std_dev = T(1)) {
  if (std_dev < T(0)) throw ConfigError("randn std must be >= 0");
  Tensor<T> out(std::move(shape));
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out(i) = mean + std_dev * static_cast<T>(rng.next_gaussian());
  }
  return out;
}

}  // namespace tokf
