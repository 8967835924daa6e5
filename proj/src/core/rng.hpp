// Deterministic RNG: SplitMix64 core with hand-rolled distributions.
// std distributions are not portable across standard libraries, so all
// sampling goes through this. Identical seed => identical stream everywhere.
#pragma once

#include <cmath>
#include <cstdint>

#include "common.hpp"

namespace lab {

class Rng {
 public:
  static constexpr const char* kAlgorithm = "splitmix64";

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // Box-Muller, second value cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // rejection-sampled within [-2, 2] sigma
  double truncated_normal(double stddev) {
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // independent child stream; used for per-resample / per-item seeding
  Rng fork(std::uint64_t salt) const {
    Rng r(state_ ^ (0x632be59bd9b4e019ULL + salt * 0x9e3779b97f4a7c15ULL));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lab
