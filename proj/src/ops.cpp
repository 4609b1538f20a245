#include "conformer/ops.hpp"

#include <algorithm>
#include <cmath>

#include "conformer/kernels.hpp"

namespace conformer::num {

namespace {

Tape& tp(Var v) { return *v.tape; }

Var emit(Tape& t, Tensor v, const char* name, std::initializer_list<Var> ps,
         std::function<void(Tape&, int)> back) {
  check_finite(v, name);
  return t.record(std::move(v), ps, std::move(back));
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.same_shape(tb), "add: shape mismatch");
  Tensor out = Tensor::uninit(ta.shape());
  const double *pa = ta.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] + pb[i];
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "add", {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    if (t.needs_grad(Var{&t, ia}))
      kern::axpy(1.0, g.data(), t.grad_buffer(ia).mutable_data(), g.numel());
    if (t.needs_grad(Var{&t, ib}))
      kern::axpy(1.0, g.data(), t.grad_buffer(ib).mutable_data(), g.numel());
  });
}

Var sub(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.same_shape(tb), "sub: shape mismatch");
  Tensor out = Tensor::uninit(ta.shape());
  const double *pa = ta.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] - pb[i];
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "sub", {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    if (t.needs_grad(Var{&t, ia}))
      kern::axpy(1.0, g.data(), t.grad_buffer(ia).mutable_data(), g.numel());
    if (t.needs_grad(Var{&t, ib}))
      kern::axpy(-1.0, g.data(), t.grad_buffer(ib).mutable_data(), g.numel());
  });
}

Var mul(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out = Tensor::uninit(ta.shape());
  const double *pa = ta.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] * pb[i];
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "mul", {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    const double* va = t.val(Var{&t, ia}).data();
    const double* vb = t.val(Var{&t, ib}).data();
    if (t.needs_grad(Var{&t, ia})) {
      double* da = t.grad_buffer(ia).mutable_data();
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += pg[i] * vb[i];
    }
    if (t.needs_grad(Var{&t, ib})) {
      double* db = t.grad_buffer(ib).mutable_data();
      for (int64_t i = 0; i < g.numel(); ++i) db[i] += pg[i] * va[i];
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  const Tensor& ta = a.val();
  Tensor out = Tensor::uninit(ta.shape());
  const double* pa = ta.data();
  double* po = out.mutable_data();
  for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] * s;
  int ia = a.id;
  return emit(tp(a), std::move(out), "scale", {a}, [ia, s](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    kern::axpy(s, g.data(), t.grad_buffer(ia).mutable_data(), g.numel());
  });
}

Var add_scalar(Var a, double s) {
  const Tensor& ta = a.val();
  Tensor out = Tensor::uninit(ta.shape());
  const double* pa = ta.data();
  double* po = out.mutable_data();
  for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] + s;
  int ia = a.id;
  return emit(tp(a), std::move(out), "add_scalar", {a}, [ia](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    kern::axpy(1.0, g.data(), t.grad_buffer(ia).mutable_data(), g.numel());
  });
}

namespace {
double sigmoid_s(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}
double softplus_s(double x) {
  return x >= 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Var activation(Var a, Act kind) {
  const Tensor& ta = a.val();
  Tensor out = Tensor::uninit(ta.shape());
  const double* pa = ta.data();
  double* po = out.mutable_data();
  switch (kind) {
    case Act::Sigmoid:
      for (int64_t i = 0; i < ta.numel(); ++i) po[i] = sigmoid_s(pa[i]);
      break;
    case Act::Tanh:
      for (int64_t i = 0; i < ta.numel(); ++i) po[i] = std::tanh(pa[i]);
      break;
    case Act::Softplus:
      for (int64_t i = 0; i < ta.numel(); ++i) po[i] = softplus_s(pa[i]);
      break;
    case Act::Gelu:
      for (int64_t i = 0; i < ta.numel(); ++i)
        po[i] = 0.5 * pa[i] * (1.0 + std::erf(pa[i] * kInvSqrt2));
      break;
  }
  int ia = a.id;
  return emit(tp(a), std::move(out), "activation", {a},
              [ia, kind](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                const double* px = t.val(Var{&t, ia}).data();
                const double* py = t.val(Var{&t, self}).data();
                double* da = t.grad_buffer(ia).mutable_data();
                switch (kind) {
                  case Act::Sigmoid:
                    for (int64_t i = 0; i < g.numel(); ++i)
                      da[i] += pg[i] * py[i] * (1.0 - py[i]);
                    break;
                  case Act::Tanh:
                    for (int64_t i = 0; i < g.numel(); ++i)
                      da[i] += pg[i] * (1.0 - py[i] * py[i]);
                    break;
                  case Act::Softplus:
                    for (int64_t i = 0; i < g.numel(); ++i)
                      da[i] += pg[i] * sigmoid_s(px[i]);
                    break;
                  case Act::Gelu:
                    for (int64_t i = 0; i < g.numel(); ++i) {
                      double x = px[i];
                      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                      da[i] += pg[i] * (cdf + x * pdf);
                    }
                    break;
                }
              });
}

Var matmul(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.rank() == 2 && tb.rank() == 2, "matmul: rank-2 expected");
  require(ta.dim(1) == tb.dim(0), "matmul: inner axes disagree");
  int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kern::matmul_acc(ta.data(), tb.data(), out.mutable_data(), m, k, n);
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "matmul", {a, b},
              [ia, ib, m, k, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& va = t.val(Var{&t, ia});
                const Tensor& vb = t.val(Var{&t, ib});
                if (t.needs_grad(Var{&t, ia}))
                  kern::matmul_nt_acc(g.data(), vb.data(),
                                      t.grad_buffer(ia).mutable_data(), m, n, k);
                if (t.needs_grad(Var{&t, ib}))
                  kern::matmul_tn_acc(va.data(), g.data(),
                                      t.grad_buffer(ib).mutable_data(), k, m, n);
              });
}

Var matmul_nt(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.rank() == 2 && tb.rank() == 2, "matmul_nt: rank-2 expected");
  require(ta.dim(1) == tb.dim(1), "matmul_nt: inner axes disagree");
  int m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
  Tensor out = Tensor::zeros({m, n});
  kern::matmul_nt_acc(ta.data(), tb.data(), out.mutable_data(), m, k, n);
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "matmul_nt", {a, b},
              [ia, ib, m, k, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& va = t.val(Var{&t, ia});
                const Tensor& vb = t.val(Var{&t, ib});
                if (t.needs_grad(Var{&t, ia}))
                  kern::matmul_acc(g.data(), vb.data(),
                                   t.grad_buffer(ia).mutable_data(), m, n, k);
                if (t.needs_grad(Var{&t, ib}))
                  kern::matmul_tn_acc(g.data(), va.data(),
                                      t.grad_buffer(ib).mutable_data(), n, m, k);
              });
}

Var matmul_tn(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.rank() == 2 && tb.rank() == 2, "matmul_tn: rank-2 expected");
  require(ta.dim(0) == tb.dim(0), "matmul_tn: inner axes disagree");
  int k = ta.dim(0), m = ta.dim(1), n = tb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kern::matmul_tn_acc(ta.data(), tb.data(), out.mutable_data(), m, k, n);
  int ia = a.id, ib = b.id;
  return emit(tp(a), std::move(out), "matmul_tn", {a, b},
              [ia, ib, m, k, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& va = t.val(Var{&t, ia});
                const Tensor& vb = t.val(Var{&t, ib});
                if (t.needs_grad(Var{&t, ia}))
                  kern::matmul_nt_acc(vb.data(), g.data(),
                                      t.grad_buffer(ia).mutable_data(), k, n, m);
                if (t.needs_grad(Var{&t, ib}))
                  kern::matmul_acc(va.data(), g.data(),
                                   t.grad_buffer(ib).mutable_data(), k, m, n);
              });
}

Var transpose2d(Var a) {
  const Tensor& ta = a.val();
  require(ta.rank() == 2, "transpose2d: rank-2 expected");
  int m = ta.dim(0), n = ta.dim(1);
  Tensor out = Tensor::uninit({n, m});
  const double* pa = ta.data();
  double* po = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[static_cast<long>(j) * m + i] = pa[static_cast<long>(i) * n + j];
  int ia = a.id;
  return emit(tp(a), std::move(out), "transpose2d", {a},
              [ia, m, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                double* da = t.grad_buffer(ia).mutable_data();
                for (int j = 0; j < n; ++j)
                  for (int i = 0; i < m; ++i)
                    da[static_cast<long>(i) * n + j] += pg[static_cast<long>(j) * m + i];
              });
}

Var reshape(Var a, Shape s) {
  Tensor out = a.val().reshaped(std::move(s));
  int ia = a.id;
  return tp(a).record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    kern::axpy(1.0, g.data(), t.grad_buffer(ia).mutable_data(), g.numel());
  });
}

Var slice_rows(Var a, int r0, int r1) {
  const Tensor& ta = a.val();
  Tensor out = ta.view_leading(r0, r1);
  int ia = a.id;
  int64_t inner = ta.dim(0) > 0 ? ta.numel() / ta.dim(0) : 0;
  return tp(a).record(std::move(out), {a}, [ia, r0, inner](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    double* da = t.grad_buffer(ia).mutable_data() + inner * r0;
    kern::axpy(1.0, g.data(), da, g.numel());
  });
}

Var slice_cols(Var a, int c0, int c1) {
  const Tensor& ta = a.val();
  require(ta.rank() == 2, "slice_cols: rank-2 expected");
  require(0 <= c0 && c0 < c1 && c1 <= ta.dim(1), "slice_cols: bad range");
  int m = ta.dim(0), n = ta.dim(1), w = c1 - c0;
  Tensor out = Tensor::uninit({m, w});
  const double* pa = ta.data();
  double* po = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) po[static_cast<long>(i) * w + j] = pa[static_cast<long>(i) * n + c0 + j];
  int ia = a.id;
  return tp(a).record(std::move(out), {a}, [ia, m, n, c0, w](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    double* da = t.grad_buffer(ia).mutable_data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        da[static_cast<long>(i) * n + c0 + j] += pg[static_cast<long>(i) * w + j];
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.rank() == 2 && tb.rank() == 2 && ta.dim(0) == tb.dim(0),
          "concat_cols: incompatible shapes");
  int m = ta.dim(0), na = ta.dim(1), nb = tb.dim(1);
  Tensor out = Tensor::uninit({m, na + nb});
  const double *pa = ta.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < na; ++j) po[static_cast<long>(i) * (na + nb) + j] = pa[static_cast<long>(i) * na + j];
    for (int j = 0; j < nb; ++j) po[static_cast<long>(i) * (na + nb) + na + j] = pb[static_cast<long>(i) * nb + j];
  }
  int ia = a.id, ib = b.id;
  return tp(a).record(std::move(out), {a, b}, [ia, ib, m, na, nb](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    int n = na + nb;
    if (t.needs_grad(Var{&t, ia})) {
      double* da = t.grad_buffer(ia).mutable_data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < na; ++j) da[static_cast<long>(i) * na + j] += pg[static_cast<long>(i) * n + j];
    }
    if (t.needs_grad(Var{&t, ib})) {
      double* db = t.grad_buffer(ib).mutable_data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nb; ++j) db[static_cast<long>(i) * nb + j] += pg[static_cast<long>(i) * n + na + j];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Tape& t = tp(parts[0]);
  Shape s = parts[0].val().shape();
  int total = 0;
  int64_t inner = parts[0].val().dim(0) > 0
                      ? parts[0].val().numel() / parts[0].val().dim(0)
                      : 0;
  for (const Var& p : parts) {
    const Tensor& tv = p.val();
    require(tv.rank() == static_cast<int>(s.size()), "concat_rows: rank mismatch");
    for (size_t i = 1; i < s.size(); ++i)
      require(tv.dim(static_cast<int>(i)) == s[i], "concat_rows: trailing dims differ");
    total += tv.dim(0);
  }
  s[0] = total;
  Tensor out = Tensor::uninit(s);
  double* po = out.mutable_data();
  std::vector<int> ids;
  std::vector<int64_t> offs;
  int64_t off = 0;
  for (const Var& p : parts) {
    const Tensor& tv = p.val();
    for (int64_t i = 0; i < tv.numel(); ++i) po[off + i] = tv.data()[i];
    ids.push_back(p.id);
    offs.push_back(off);
    off += tv.numel();
  }
  (void)inner;
  Var first = parts[0];
  return t.record(std::move(out), {first}, [ids, offs](Tape& tt, int self) {
    const Tensor& g = *tt.grad(Var{&tt, self});
    const double* pg = g.data();
    for (size_t i = 0; i < ids.size(); ++i) {
      Var p{&tt, ids[i]};
      if (!tt.needs_grad(p)) continue;
      Tensor& gb = tt.grad_buffer(ids[i]);
      kern::axpy(1.0, pg + offs[i], gb.mutable_data(), gb.numel());
    }
  });
}

Var sum(Var a) {
  const Tensor& ta = a.val();
  double acc = 0.0;
  const double* pa = ta.data();
  for (int64_t i = 0; i < ta.numel(); ++i) acc += pa[i];
  int ia = a.id;
  return emit(tp(a), Tensor::scalar(acc), "sum", {a}, [ia](Tape& t, int self) {
    double g = t.grad(Var{&t, self})->data()[0];
    Tensor& gb = t.grad_buffer(ia);
    double* da = gb.mutable_data();
    for (int64_t i = 0; i < gb.numel(); ++i) da[i] += g;
  });
}

Var mean(Var a) {
  int64_t n = a.val().numel();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mse(Var a, Var b) {
  const Tensor &ta = a.val(), &tb = b.val();
  require(ta.same_shape(tb), "mse: shape mismatch");
  int64_t n = ta.numel();
  const double *pa = ta.data(), *pb = tb.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = pa[i] - pb[i];
    acc += d * d;
  }
  int ia = a.id, ib = b.id;
  return emit(tp(a), Tensor::scalar(acc / static_cast<double>(n)), "mse", {a, b},
              [ia, ib, n](Tape& t, int self) {
                double g = t.grad(Var{&t, self})->data()[0] * 2.0 / static_cast<double>(n);
                const double* va = t.val(Var{&t, ia}).data();
                const double* vb = t.val(Var{&t, ib}).data();
                if (t.needs_grad(Var{&t, ia})) {
                  double* da = t.grad_buffer(ia).mutable_data();
                  for (int64_t i = 0; i < n; ++i) da[i] += g * (va[i] - vb[i]);
                }
                if (t.needs_grad(Var{&t, ib})) {
                  double* db = t.grad_buffer(ib).mutable_data();
                  for (int64_t i = 0; i < n; ++i) db[i] -= g * (va[i] - vb[i]);
                }
              });
}

namespace {
// softmax along rows of an [m x n] buffer
void softmax_rows_raw(const double* x, double* y, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const double* xi = x + static_cast<long>(i) * n;
    double* yi = y + static_cast<long>(i) * n;
    double mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    double inv = 1.0 / z;
    for (int j = 0; j < n; ++j) yi[j] *= inv;
  }
}
}  // namespace

Tensor softmax_tensor(const Tensor& x, int axis) {
  require(x.rank() == 2, "softmax: rank-2 expected");
  if (axis == 1) {
    Tensor out = Tensor::uninit(x.shape());
    softmax_rows_raw(x.data(), out.mutable_data(), x.dim(0), x.dim(1));
    return out;
  }
  require(axis == 0, "softmax: bad axis");
  // transpose, row softmax, transpose back
  int m = x.dim(0), n = x.dim(1);
  Tensor xt = Tensor::uninit({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      xt.mutable_data()[static_cast<long>(j) * m + i] = x.data()[static_cast<long>(i) * n + j];
  Tensor yt = Tensor::uninit({n, m});
  softmax_rows_raw(xt.data(), yt.mutable_data(), n, m);
  Tensor out = Tensor::zeros({m, n});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i)
      out.mutable_data()[static_cast<long>(i) * n + j] = yt.data()[static_cast<long>(j) * m + i];
  return out;
}

Var softmax(Var a, int axis) {
  const Tensor& ta = a.val();
  require(ta.rank() == 2, "softmax: rank-2 expected");
  require(axis == 0 || axis == 1, "softmax: bad axis");
  Tensor out = softmax_tensor(ta, axis);
  int ia = a.id;
  int m = ta.dim(0), n = ta.dim(1);
  return emit(tp(a), std::move(out), "softmax", {a},
              [ia, m, n, axis](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& y = t.val(Var{&t, self});
                const double* pg = g.data();
                const double* py = y.data();
                double* da = t.grad_buffer(ia).mutable_data();
                if (axis == 1) {
                  for (int i = 0; i < m; ++i) {
                    const double* gi = pg + static_cast<long>(i) * n;
                    const double* yi = py + static_cast<long>(i) * n;
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += gi[j] * yi[j];
                    double* di = da + static_cast<long>(i) * n;
                    for (int j = 0; j < n; ++j) di[j] += yi[j] * (gi[j] - dot);
                  }
                } else {
                  for (int j = 0; j < n; ++j) {
                    double dot = 0.0;
                    for (int i = 0; i < m; ++i)
                      dot += pg[static_cast<long>(i) * n + j] * py[static_cast<long>(i) * n + j];
                    for (int i = 0; i < m; ++i) {
                      long k = static_cast<long>(i) * n + j;
                      da[k] += py[k] * (pg[k] - dot);
                    }
                  }
                }
              });
}

Var masked_softmax_band(Var logits, int hw) {
  const Tensor& tl = logits.val();
  require(tl.rank() == 2, "masked_softmax_band: rank-2 expected");
  int m = tl.dim(0), n = tl.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const double* px = tl.data();
  double* py = out.mutable_data();
  for (int i = 0; i < m; ++i) {
    int j0 = hw < 0 ? 0 : std::max(0, i - hw);
    int j1 = hw < 0 ? n - 1 : std::min(n - 1, i + hw);
    if (j1 < j0)
      throw std::invalid_argument("masked_softmax_band: fully masked row");
    const double* xi = px + static_cast<long>(i) * n;
    double* yi = py + static_cast<long>(i) * n;
    double mx = xi[j0];
    for (int j = j0 + 1; j <= j1; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int j = j0; j <= j1; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    double inv = 1.0 / z;
    for (int j = j0; j <= j1; ++j) yi[j] *= inv;
  }
  int il = logits.id;
  return emit(tp(logits), std::move(out), "masked_softmax_band", {logits},
              [il, m, n, hw](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& y = t.val(Var{&t, self});
                const double* pg = g.data();
                const double* py = y.data();
                double* da = t.grad_buffer(il).mutable_data();
                for (int i = 0; i < m; ++i) {
                  int j0 = hw < 0 ? 0 : std::max(0, i - hw);
                  int j1 = hw < 0 ? n - 1 : std::min(n - 1, i + hw);
                  const double* gi = pg + static_cast<long>(i) * n;
                  const double* yi = py + static_cast<long>(i) * n;
                  double dot = 0.0;
                  for (int j = j0; j <= j1; ++j) dot += gi[j] * yi[j];
                  double* di = da + static_cast<long>(i) * n;
                  for (int j = j0; j <= j1; ++j) di[j] += yi[j] * (gi[j] - dot);
                }
              });
}

Var conv1d(Var x, Var w, Var b) {
  const Tensor &tx = x.val(), &tw = w.val(), &tb = b.val();
  require(tx.rank() == 2, "conv1d: x must be [Cin,L]");
  require(tw.rank() == 3, "conv1d: kernel must be [Cout,Cin,k]");
  require(tb.rank() == 1, "conv1d: bias must be [Cout]");
  int cin = tx.dim(0), L = tx.dim(1);
  int cout = tw.dim(0), k = tw.dim(2);
  require(tw.dim(1) == cin, "conv1d: kernel channel mismatch");
  require(tb.dim(0) == cout, "conv1d: bias size mismatch");
  if (k % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  int hw = (k - 1) / 2;
  Tensor out = Tensor::zeros({cout, L});
  const double *px = tx.data(), *pw = tw.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int o = 0; o < cout; ++o) {
    double* orow = po + static_cast<long>(o) * L;
    for (int t = 0; t < L; ++t) orow[t] = pb[o];
    for (int c = 0; c < cin; ++c) {
      const double* xrow = px + static_cast<long>(c) * L;
      const double* wrow = pw + (static_cast<long>(o) * cin + c) * k;
      for (int j = 0; j < k; ++j) {
        double wv = wrow[j];
        int shift = j - hw;
        int t0 = std::max(0, -shift), t1 = std::min(L, L - shift);
        for (int t = t0; t < t1; ++t) orow[t] += wv * xrow[t + shift];
      }
    }
  }
  int ix = x.id, iw = w.id, ib = b.id;
  return emit(tp(x), std::move(out), "conv1d", {x, w, b},
              [ix, iw, ib, cin, cout, L, k, hw](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                const double* px = t.val(Var{&t, ix}).data();
                const double* pw = t.val(Var{&t, iw}).data();
                if (t.needs_grad(Var{&t, ib})) {
                  double* db = t.grad_buffer(ib).mutable_data();
                  for (int o = 0; o < cout; ++o) {
                    const double* grow = pg + static_cast<long>(o) * L;
                    double acc = 0.0;
                    for (int tt = 0; tt < L; ++tt) acc += grow[tt];
                    db[o] += acc;
                  }
                }
                bool nx = t.needs_grad(Var{&t, ix});
                bool nw = t.needs_grad(Var{&t, iw});
                double* dx = nx ? t.grad_buffer(ix).mutable_data() : nullptr;
                double* dw = nw ? t.grad_buffer(iw).mutable_data() : nullptr;
                for (int o = 0; o < cout; ++o) {
                  const double* grow = pg + static_cast<long>(o) * L;
                  for (int c = 0; c < cin; ++c) {
                    const double* xrow = px + static_cast<long>(c) * L;
                    const double* wrow = pw + (static_cast<long>(o) * cin + c) * k;
                    double* dxrow = nx ? dx + static_cast<long>(c) * L : nullptr;
                    double* dwrow = nw ? dw + (static_cast<long>(o) * cin + c) * k : nullptr;
                    for (int j = 0; j < k; ++j) {
                      int shift = j - hw;
                      int t0 = std::max(0, -shift), t1 = std::min(L, L - shift);
                      if (nw) {
                        double acc = 0.0;
                        for (int tt = t0; tt < t1; ++tt)
                          acc += grow[tt] * xrow[tt + shift];
                        dwrow[j] += acc;
                      }
                      if (nx) {
                        double wv = wrow[j];
                        for (int tt = t0; tt < t1; ++tt)
                          dxrow[tt + shift] += wv * grow[tt];
                      }
                    }
                  }
                }
              });
}

Var avgpool1d_replicate(Var x, int kernel) {
  const Tensor& tx = x.val();
  require(tx.rank() == 2, "avgpool1d_replicate: x must be [C,L]");
  if (kernel % 2 == 0)
    throw std::invalid_argument("avgpool1d_replicate: kernel must be odd");
  int C = tx.dim(0), L = tx.dim(1);
  if (kernel > 2 * L - 1)
    throw std::invalid_argument("avgpool1d_replicate: kernel too large");
  int hw = (kernel - 1) / 2;
  double inv = 1.0 / kernel;
  Tensor out = Tensor::uninit({C, L});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int c = 0; c < C; ++c) {
    const double* xr = px + static_cast<long>(c) * L;
    double* orow = po + static_cast<long>(c) * L;
    for (int t = 0; t < L; ++t) {
      double acc = 0.0;
      for (int j = -hw; j <= hw; ++j) {
        int s = std::clamp(t + j, 0, L - 1);
        acc += xr[s];
      }
      orow[t] = acc * inv;
    }
  }
  int ix = x.id;
  return emit(tp(x), std::move(out), "avgpool1d_replicate", {x},
              [ix, C, L, hw, inv](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                double* dx = t.grad_buffer(ix).mutable_data();
                for (int c = 0; c < C; ++c) {
                  const double* grow = pg + static_cast<long>(c) * L;
                  double* dxr = dx + static_cast<long>(c) * L;
                  for (int tt = 0; tt < L; ++tt) {
                    double gv = grow[tt] * inv;
                    for (int j = -hw; j <= hw; ++j)
                      dxr[std::clamp(tt + j, 0, L - 1)] += gv;
                  }
                }
              });
}

Var shift_time(Var x, int offset) {
  const Tensor& tx = x.val();
  require(tx.rank() == 3, "shift_time: [B,L,C] expected");
  int B = tx.dim(0), L = tx.dim(1), C = tx.dim(2);
  Tensor out = Tensor::zeros({B, L, C});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      int s = t + offset;
      if (s < 0 || s >= L) continue;
      const double* src = px + (static_cast<long>(b) * L + s) * C;
      double* dst = po + (static_cast<long>(b) * L + t) * C;
      for (int c = 0; c < C; ++c) dst[c] = src[c];
    }
  }
  int ix = x.id;
  return tp(x).record(std::move(out), {x}, [ix, B, L, C, offset](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    double* dx = t.grad_buffer(ix).mutable_data();
    for (int b = 0; b < B; ++b)
      for (int tt = 0; tt < L; ++tt) {
        int s = tt + offset;
        if (s < 0 || s >= L) continue;
        const double* gr = pg + (static_cast<long>(b) * L + tt) * C;
        double* dr = dx + (static_cast<long>(b) * L + s) * C;
        for (int c = 0; c < C; ++c) dr[c] += gr[c];
      }
  });
}

Var avgpool_time(Var x, int kernel) {
  const Tensor& tx = x.val();
  require(tx.rank() == 3, "avgpool_time: [B,L,C] expected");
  if (kernel % 2 == 0)
    throw std::invalid_argument("avgpool_time: kernel must be odd");
  int B = tx.dim(0), L = tx.dim(1), C = tx.dim(2);
  if (kernel > 2 * L - 1)
    throw std::invalid_argument("avgpool_time: kernel too large");
  int hw = (kernel - 1) / 2;
  double inv = 1.0 / kernel;
  Tensor out = Tensor::zeros({B, L, C});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b) {
    const double* xb = px + static_cast<long>(b) * L * C;
    double* ob = po + static_cast<long>(b) * L * C;
    for (int t = 0; t < L; ++t) {
      double* orow = ob + static_cast<long>(t) * C;
      for (int j = -hw; j <= hw; ++j) {
        const double* xrow = xb + static_cast<long>(std::clamp(t + j, 0, L - 1)) * C;
        for (int c = 0; c < C; ++c) orow[c] += xrow[c];
      }
      for (int c = 0; c < C; ++c) orow[c] *= inv;
    }
  }
  int ix = x.id;
  return emit(tp(x), std::move(out), "avgpool_time", {x},
              [ix, B, L, C, hw, inv](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                double* dx = t.grad_buffer(ix).mutable_data();
                for (int b = 0; b < B; ++b) {
                  const double* gb = pg + static_cast<long>(b) * L * C;
                  double* db = dx + static_cast<long>(b) * L * C;
                  for (int tt = 0; tt < L; ++tt) {
                    const double* grow = gb + static_cast<long>(tt) * C;
                    for (int j = -hw; j <= hw; ++j) {
                      double* drow = db + static_cast<long>(std::clamp(tt + j, 0, L - 1)) * C;
                      for (int c = 0; c < C; ++c) drow[c] += grow[c] * inv;
                    }
                  }
                }
              });
}

Var mean_time(Var x) {
  const Tensor& tx = x.val();
  require(tx.rank() == 3, "mean_time: [B,L,C] expected");
  int B = tx.dim(0), L = tx.dim(1), C = tx.dim(2);
  double inv = 1.0 / L;
  Tensor out = Tensor::zeros({B, C});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b) {
    double* orow = po + static_cast<long>(b) * C;
    for (int t = 0; t < L; ++t) {
      const double* xrow = px + (static_cast<long>(b) * L + t) * C;
      for (int c = 0; c < C; ++c) orow[c] += xrow[c];
    }
    for (int c = 0; c < C; ++c) orow[c] *= inv;
  }
  int ix = x.id;
  return emit(tp(x), std::move(out), "mean_time", {x},
              [ix, B, L, C, inv](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                double* dx = t.grad_buffer(ix).mutable_data();
                for (int b = 0; b < B; ++b) {
                  const double* grow = pg + static_cast<long>(b) * C;
                  for (int tt = 0; tt < L; ++tt) {
                    double* drow = dx + (static_cast<long>(b) * L + tt) * C;
                    for (int c = 0; c < C; ++c) drow[c] += grow[c] * inv;
                  }
                }
              });
}

Var broadcast_time(Var x, int L) {
  const Tensor& tx = x.val();
  require(tx.rank() == 2, "broadcast_time: [B,C] expected");
  int B = tx.dim(0), C = tx.dim(1);
  Tensor out = Tensor::uninit({B, L, C});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b) {
    const double* xrow = px + static_cast<long>(b) * C;
    for (int t = 0; t < L; ++t) {
      double* orow = po + (static_cast<long>(b) * L + t) * C;
      for (int c = 0; c < C; ++c) orow[c] = xrow[c];
    }
  }
  int ix = x.id;
  return tp(x).record(std::move(out), {x}, [ix, B, L, C](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    double* dx = t.grad_buffer(ix).mutable_data();
    for (int b = 0; b < B; ++b) {
      double* drow = dx + static_cast<long>(b) * C;
      for (int tt = 0; tt < L; ++tt) {
        const double* grow = pg + (static_cast<long>(b) * L + tt) * C;
        for (int c = 0; c < C; ++c) drow[c] += grow[c];
      }
    }
  });
}

Var slice_time(Var x, int t0, int t1) {
  const Tensor& tx = x.val();
  require(tx.rank() == 3, "slice_time: [B,L,C] expected");
  int B = tx.dim(0), L = tx.dim(1), C = tx.dim(2);
  require(0 <= t0 && t0 < t1 && t1 <= L, "slice_time: bad range");
  int W = t1 - t0;
  Tensor out = Tensor::uninit({B, W, C});
  const double* px = tx.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < W; ++t) {
      const double* src = px + (static_cast<long>(b) * L + t0 + t) * C;
      double* dst = po + (static_cast<long>(b) * W + t) * C;
      for (int c = 0; c < C; ++c) dst[c] = src[c];
    }
  int ix = x.id;
  return tp(x).record(std::move(out), {x}, [ix, B, L, C, t0, W](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    double* dx = t.grad_buffer(ix).mutable_data();
    for (int b = 0; b < B; ++b)
      for (int tt = 0; tt < W; ++tt) {
        const double* gr = pg + (static_cast<long>(b) * W + tt) * C;
        double* dr = dx + (static_cast<long>(b) * L + t0 + tt) * C;
        for (int c = 0; c < C; ++c) dr[c] += gr[c];
      }
  });
}

Var rowscale(Var x, Var s) {
  const Tensor &tx = x.val(), &ts = s.val();
  require(tx.rank() == 2 && ts.rank() == 1 && ts.dim(0) == tx.dim(0),
          "rowscale: incompatible shapes");
  int m = tx.dim(0), n = tx.dim(1);
  Tensor out = Tensor::uninit({m, n});
  const double *px = tx.data(), *ps = ts.data();
  double* po = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[static_cast<long>(i) * n + j] = px[static_cast<long>(i) * n + j] * ps[i];
  int ix = x.id, is = s.id;
  return emit(tp(x), std::move(out), "rowscale", {x, s},
              [ix, is, m, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                const double* px = t.val(Var{&t, ix}).data();
                const double* ps = t.val(Var{&t, is}).data();
                if (t.needs_grad(Var{&t, ix})) {
                  double* dx = t.grad_buffer(ix).mutable_data();
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                      dx[static_cast<long>(i) * n + j] += pg[static_cast<long>(i) * n + j] * ps[i];
                }
                if (t.needs_grad(Var{&t, is})) {
                  double* ds = t.grad_buffer(is).mutable_data();
                  for (int i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                      acc += pg[static_cast<long>(i) * n + j] * px[static_cast<long>(i) * n + j];
                    ds[i] += acc;
                  }
                }
              });
}

Var add_rowvec(Var x, Var v) {
  const Tensor &tx = x.val(), &tv = v.val();
  require(tx.rank() == 2 && tv.rank() == 1 && tv.dim(0) == tx.dim(1),
          "add_rowvec: incompatible shapes");
  int m = tx.dim(0), n = tx.dim(1);
  Tensor out = Tensor::uninit({m, n});
  const double *px = tx.data(), *pv = tv.data();
  double* po = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[static_cast<long>(i) * n + j] = px[static_cast<long>(i) * n + j] + pv[j];
  int ix = x.id, iv = v.id;
  return emit(tp(x), std::move(out), "add_rowvec", {x, v},
              [ix, iv, m, n](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                if (t.needs_grad(Var{&t, ix}))
                  kern::axpy(1.0, pg, t.grad_buffer(ix).mutable_data(), g.numel());
                if (t.needs_grad(Var{&t, iv})) {
                  double* dv = t.grad_buffer(iv).mutable_data();
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) dv[j] += pg[static_cast<long>(i) * n + j];
                }
              });
}

Var matmul_lhs_batched(Var a, Var x) {
  const Tensor &ta = a.val(), &tx = x.val();
  require(ta.rank() == 2 && tx.rank() == 3 && ta.dim(1) == tx.dim(1),
          "matmul_lhs_batched: incompatible shapes");
  int B = tx.dim(0), Lk = tx.dim(1), d = tx.dim(2), Lq = ta.dim(0);
  Tensor out = Tensor::zeros({B, Lq, d});
  for (int b = 0; b < B; ++b)
    kern::matmul_acc(ta.data(), tx.data() + static_cast<long>(b) * Lk * d,
                     out.mutable_data() + static_cast<long>(b) * Lq * d, Lq, Lk, d);
  int ia = a.id, ix = x.id;
  return emit(tp(a), std::move(out), "matmul_lhs_batched", {a, x},
              [ia, ix, B, Lk, Lq, d](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const Tensor& va = t.val(Var{&t, ia});
                const Tensor& vx = t.val(Var{&t, ix});
                if (t.needs_grad(Var{&t, ia})) {
                  double* da = t.grad_buffer(ia).mutable_data();
                  for (int b = 0; b < B; ++b)
                    kern::matmul_nt_acc(g.data() + static_cast<long>(b) * Lq * d,
                                        vx.data() + static_cast<long>(b) * Lk * d,
                                        da, Lq, d, Lk);
                }
                if (t.needs_grad(Var{&t, ix})) {
                  double* dx = t.grad_buffer(ix).mutable_data();
                  for (int b = 0; b < B; ++b)
                    kern::matmul_tn_acc(va.data(),
                                        g.data() + static_cast<long>(b) * Lq * d,
                                        dx + static_cast<long>(b) * Lk * d, Lk,
                                        Lq, d);
                }
              });
}

Var add_bias_time(Var x, Var bias) {
  const Tensor &tx = x.val(), &tb = bias.val();
  require(tx.rank() == 3 && tb.rank() == 2 && tx.dim(1) == tb.dim(0) &&
              tx.dim(2) == tb.dim(1),
          "add_bias_time: incompatible shapes");
  int B = tx.dim(0);
  int64_t inner = tb.numel();
  Tensor out = Tensor::uninit(tx.shape());
  const double *px = tx.data(), *pb = tb.data();
  double* po = out.mutable_data();
  for (int b = 0; b < B; ++b)
    for (int64_t i = 0; i < inner; ++i)
      po[static_cast<long>(b) * inner + i] = px[static_cast<long>(b) * inner + i] + pb[i];
  int ix = x.id, ib = bias.id;
  return emit(tp(x), std::move(out), "add_bias_time", {x, bias},
              [ix, ib, B, inner](Tape& t, int self) {
                const Tensor& g = *t.grad(Var{&t, self});
                const double* pg = g.data();
                if (t.needs_grad(Var{&t, ix}))
                  kern::axpy(1.0, pg, t.grad_buffer(ix).mutable_data(), g.numel());
                if (t.needs_grad(Var{&t, ib})) {
                  double* db = t.grad_buffer(ib).mutable_data();
                  for (int b = 0; b < B; ++b)
                    kern::axpy(1.0, pg + static_cast<long>(b) * inner, db, inner);
                }
              });
}

Var gather_rows(Var table, const std::vector<int>& idx) {
  const Tensor& tt = table.val();
  require(tt.rank() == 2, "gather_rows: table must be rank-2");
  int V = tt.dim(0), d = tt.dim(1);
  for (int i : idx)
    require(0 <= i && i < V, "gather_rows: index out of range");
  int n = static_cast<int>(idx.size());
  Tensor out = Tensor::uninit({n, d});
  const double* pt = tt.data();
  double* po = out.mutable_data();
  for (int i = 0; i < n; ++i) {
    const double* src = pt + static_cast<long>(idx[static_cast<size_t>(i)]) * d;
    double* dst = po + static_cast<long>(i) * d;
    for (int c = 0; c < d; ++c) dst[c] = src[c];
  }
  int it = table.id;
  return tp(table).record(std::move(out), {table}, [it, idx, d](Tape& t, int self) {
    const Tensor& g = *t.grad(Var{&t, self});
    const double* pg = g.data();
    double* dt = t.grad_buffer(it).mutable_data();
    for (size_t i = 0; i < idx.size(); ++i) {
      double* dst = dt + static_cast<long>(idx[i]) * d;
      const double* src = pg + static_cast<long>(i) * d;
      for (int c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

}  // namespace conformer::num
