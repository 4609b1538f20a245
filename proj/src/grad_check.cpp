#include "conformer/grad_check.hpp"

#include <cmath>

namespace conformer::num {

namespace {
double eval_value(const std::function<Var(Tape&, Binder&)>& f) {
  Tape tape(false);
  Binder bind(tape);
  Var out = f(tape, bind);
  if (out.val().numel() != 1)
    throw std::invalid_argument("grad_check: function must be scalar-valued");
  double v = out.val()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value");
  return v;
}
}  // namespace

double grad_check(const std::function<Var(Tape&, Binder&)>& f,
                  std::span<Tensor* const> inputs, double eps) {
  // analytic pass
  std::vector<Tensor> analytic;
  {
    Tape tape(true);
    Binder bind(tape);
    Var loss = f(tape, bind);
    tape.backward(loss);
    analytic.reserve(inputs.size());
    for (Tensor* in : inputs) analytic.push_back(bind.grad_of(*in));
  }
  // central differences
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor* in = inputs[i];
    double* p = in->mutable_data();
    for (int64_t j = 0; j < in->numel(); ++j) {
      double orig = p[j];
      p[j] = orig + eps;
      double fp = eval_value(f);
      p[j] = orig - eps;
      double fm = eval_value(f);
      p[j] = orig;
      double fd = (fp - fm) / (2.0 * eps);
      double an = analytic[i][j];
      double err = std::abs(an - fd) /
                   std::max({1.0, std::abs(an), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace conformer::num
