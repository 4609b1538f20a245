#pragma once

#include <cmath>
#include <cstdint>

#include "conformer/tensor.hpp"

namespace conformer::num {

// xoshiro256++ seeded through splitmix64. Self-contained so that seeded
// runs are bitwise reproducible independent of the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& si : s_) {
      x += 0x9e3779b97f4a7c15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      si = z ^ (z >> 31);
    }
    spare_valid_ = false;
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller (cached second draw)
  double normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    spare_valid_ = true;
    return r * std::cos(a);
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

  Tensor normal_tensor(Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    double* p = t.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = normal();
    return t;
  }

  Tensor uniform_tensor(Shape s, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(s));
    double* p = t.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = uniform_range(lo, hi);
    return t;
  }

  // derive an independent stream (for shuffles, noise draws, ...)
  Rng fork(uint64_t stream) {
    return Rng(next_u64() ^ (0x632be59bd9b4e019ull * (stream + 1)));
  }

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool spare_valid_ = false;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace conformer::num
