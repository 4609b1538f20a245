#pragma once

#include <functional>
#include <span>
#include <unordered_map>

#include "conformer/ops.hpp"

namespace conformer::num {

// Lifts plain tensors onto a tape exactly once per tape, so forward code
// can be written against stored parameters and re-run per step or per
// finite-difference probe.
class Binder {
 public:
  explicit Binder(Tape& tape) : tape_(&tape) {}

  // parameter (tracked)
  Var operator()(const Tensor& t) { return lift(t, true); }
  // data (untracked)
  Var input(const Tensor& t) { return lift(t, false); }

  Var var_of(const Tensor& t) const {
    auto it = cache_.find(t.data());
    return it == cache_.end() ? Var{} : it->second;
  }

  // gradient of a bound tensor after backward(); zeros when never reached
  Tensor grad_of(const Tensor& t) const {
    Var v = var_of(t);
    if (!v.defined()) return Tensor::zeros(t.shape());
    const Tensor* g = tape_->grad(v);
    return g ? g->clone() : Tensor::zeros(t.shape());
  }

  Tape& tape() { return *tape_; }

 private:
  Var lift(const Tensor& t, bool requires_grad) {
    auto it = cache_.find(t.data());
    if (it != cache_.end()) return it->second;
    Var v = tape_->leaf(t, requires_grad);
    cache_.emplace(t.data(), v);
    return v;
  }
  Tape* tape_;
  std::unordered_map<const double*, Var> cache_;
};

// Compares reverse-mode gradients against central finite differences for a
// scalar-valued function of the given inputs. Returns the worst relative
// error over all coordinates; inputs are perturbed in place and restored.
double grad_check(const std::function<Var(Tape&, Binder&)>& f,
                  std::span<Tensor* const> inputs, double eps = 1e-5);

inline double grad_check(const std::function<Var(Tape&, Binder&)>& f,
                         std::initializer_list<Tensor*> inputs,
                         double eps = 1e-5) {
  std::vector<Tensor*> v(inputs);
  return grad_check(f, std::span<Tensor* const>(v.data(), v.size()), eps);
}

}  // namespace conformer::num
