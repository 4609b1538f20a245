#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace conformer::num {

// Thrown when an operation produces or receives non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Process-wide allocation accounting for tensor storage. Used by the
// benchmark harness to report peak working-set per attention variant.
namespace alloc_stats {
int64_t current_bytes();
int64_t peak_bytes();
void reset_peak();
}  // namespace alloc_stats

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major f64 tensor. Storage is shared; tensors are treated as
// immutable values once filled (mutable_data is for builders, optimizer
// updates and finite-difference probes, all owner-exclusive).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s);
  // uninitialized storage; only for buffers every element of which is
  // written before any read
  static Tensor uninit(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> v);
  static Tensor scalar(double v);

  bool defined() const { return st_ != nullptr; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return numel_; }
  const Shape& shape() const { return shape_; }

  const double* data() const { return st_->v.get() + offset_; }
  double* mutable_data() { return st_->v.get() + offset_; }

  double operator[](int64_t i) const { return data()[i]; }
  double at(std::initializer_list<int> idx) const;

  Tensor clone() const;
  // Reinterpret shape without copying; numel must match.
  Tensor reshaped(Shape s) const;
  // Contiguous leading-axis slice [r0, r1) sharing storage.
  Tensor view_leading(int r0, int r1) const;

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  struct Storage {
    std::unique_ptr<double[]> v;
    size_t n;
    Storage(size_t n, bool zero);
    ~Storage();
  };
  Shape shape_;
  std::shared_ptr<Storage> st_;
  int64_t offset_ = 0;
  int64_t numel_ = 0;

  static Tensor alloc(Shape s, bool zero);
};

void check_finite(const Tensor& t, const char* what);

}  // namespace conformer::num
