#include "conformer/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace conformer::num {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// iterative Cooley-Tukey, n must be a power of two
void fft_pow2(std::vector<cplx>& a, bool inverse) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    cplx wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        cplx u = a[i + j];
        cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

// Bluestein chirp-z for arbitrary n
void fft_bluestein(std::vector<cplx>& a, bool inverse) {
  size_t n = a.size();
  std::vector<cplx> chirp(n);
  for (size_t i = 0; i < n; ++i) {
    // i^2 mod 2n keeps the argument small
    uintmax_t sq = (static_cast<uintmax_t>(i) * i) % (2 * n);
    double ang = kPi * static_cast<double>(sq) / static_cast<double>(n);
    if (!inverse) ang = -ang;
    chirp[i] = cplx(std::cos(ang), std::sin(ang));
  }
  size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
  for (size_t i = 0; i < n; ++i) fa[i] = a[i] * chirp[i];
  fb[0] = std::conj(chirp[0]);
  for (size_t i = 1; i < n; ++i) fb[i] = fb[m - i] = std::conj(chirp[i]);
  fft_pow2(fa, false);
  fft_pow2(fb, false);
  for (size_t i = 0; i < m; ++i) fa[i] *= fb[i];
  fft_pow2(fa, true);
  for (size_t i = 0; i < n; ++i) a[i] = fa[i] * chirp[i];
  if (inverse) {
    double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

}  // namespace

void fft(std::vector<cplx>& a, bool inverse) {
  if (a.empty()) throw std::invalid_argument("fft: empty input");
  if (a.size() == 1) return;
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    fft_bluestein(a, inverse);
}

std::vector<cplx> rfft(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("rfft: empty input");
  std::vector<cplx> a(x.begin(), x.end());
  fft(a, false);
  a.resize(x.size() / 2 + 1);
  return a;
}

std::vector<double> irfft(const std::vector<cplx>& spec, int L) {
  if (L < 1) throw std::invalid_argument("irfft: bad length");
  size_t half = static_cast<size_t>(L) / 2 + 1;
  if (spec.size() != half)
    throw std::invalid_argument("irfft: spectrum size does not match length");
  std::vector<cplx> a(static_cast<size_t>(L));
  for (size_t i = 0; i < half; ++i) a[i] = spec[i];
  for (size_t i = half; i < a.size(); ++i)
    a[i] = std::conj(spec[static_cast<size_t>(L) - i]);
  fft(a, true);
  std::vector<double> out(static_cast<size_t>(L));
  for (size_t i = 0; i < out.size(); ++i) out[i] = a[i].real();
  return out;
}

}  // namespace conformer::num
