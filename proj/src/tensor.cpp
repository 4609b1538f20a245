#include "conformer/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

namespace conformer::num {

namespace {
std::atomic<int64_t> g_current{0};
std::atomic<int64_t> g_peak{0};

void account_alloc(int64_t bytes) {
  int64_t cur = g_current.fetch_add(bytes) + bytes;
  int64_t peak = g_peak.load();
  while (cur > peak && !g_peak.compare_exchange_weak(peak, cur)) {
  }
}
}  // namespace

namespace alloc_stats {
int64_t current_bytes() { return g_current.load(); }
int64_t peak_bytes() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_current.load()); }
}  // namespace alloc_stats

Tensor::Storage::Storage(size_t n_, bool zero)
    : v(zero ? new double[n_]() : new double[n_]), n(n_) {
  account_alloc(static_cast<int64_t>(n * sizeof(double)));
}

Tensor::Storage::~Storage() {
  g_current.fetch_sub(static_cast<int64_t>(n * sizeof(double)));
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += "x";
  }
  return out + "]";
}

Tensor Tensor::alloc(Shape s, bool zero) {
  Tensor t;
  t.numel_ = shape_numel(s);
  t.shape_ = std::move(s);
  t.st_ = std::make_shared<Storage>(static_cast<size_t>(t.numel_), zero);
  return t;
}

Tensor Tensor::zeros(Shape s) { return alloc(std::move(s), true); }

Tensor Tensor::uninit(Shape s) { return alloc(std::move(s), false); }

Tensor Tensor::full(Shape s, double v) {
  Tensor t = uninit(std::move(s));
  double* p = t.mutable_data();
  for (int64_t i = 0; i < t.numel_; ++i) p[i] = v;
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> v) {
  if (shape_numel(s) != static_cast<int64_t>(v.size()))
    throw std::invalid_argument("Tensor::from: shape " + shape_str(s) +
                                " does not match " + std::to_string(v.size()) +
                                " values");
  Tensor t = uninit(std::move(s));
  double* p = t.mutable_data();
  for (size_t i = 0; i < v.size(); ++i) p[i] = v[i];
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw std::invalid_argument("Tensor::at: index rank mismatch");
  int64_t off = 0;
  int i = 0;
  for (int v : idx) {
    off = off * shape_[static_cast<size_t>(i)] + v;
    ++i;
  }
  return data()[off];
}

Tensor Tensor::clone() const {
  Tensor t = uninit(shape_);
  const double* src = data();
  double* dst = t.mutable_data();
  for (int64_t i = 0; i < numel_; ++i) dst[i] = src[i];
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != numel_)
    throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape_) +
                                " -> " + shape_str(s));
  Tensor t = *this;
  t.shape_ = std::move(s);
  return t;
}

Tensor Tensor::view_leading(int r0, int r1) const {
  if (rank() < 1 || r0 < 0 || r1 < r0 || r1 > dim(0))
    throw std::invalid_argument("view_leading: bad range");
  int64_t inner = numel_ / (dim(0) == 0 ? 1 : dim(0));
  Tensor t = *this;
  t.shape_[0] = r1 - r0;
  t.offset_ = offset_ + inner * r0;
  t.numel_ = shape_numel(t.shape_);
  return t;
}

bool Tensor::all_finite() const {
  const double* p = data();
  for (int64_t i = 0; i < numel_; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite())
    throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace conformer::num
