#include "conformer/attention.hpp"

#include <cmath>

#include "conformer/kernels.hpp"

namespace conformer::attn {

using num::Binder;
using num::Tensor;
using num::Var;

MhaParams MhaParams::init(int d, int heads, num::Rng& rng) {
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("MhaParams: width must be divisible by heads");
  double a = std::sqrt(6.0 / (d + d));
  MhaParams p;
  p.w_q = rng.uniform_tensor({d, d}, -a, a);
  p.w_k = rng.uniform_tensor({d, d}, -a, a);
  p.w_v = rng.uniform_tensor({d, d}, -a, a);
  p.w_o = rng.uniform_tensor({d, d}, -a, a);
  p.heads = heads;
  return p;
}

BandMask::BandMask(int span) : w(span) {
  if (span <= 0 || span % 2 != 0)
    throw std::invalid_argument("window size must be even and positive");
}

Var scaled_dot_attention(Var q, Var k, Var v, int hw) {
  const Tensor& tq = q.val();
  const Tensor& tk = k.val();
  if (tq.dim(1) != tk.dim(1))
    throw std::invalid_argument("attention: key width mismatch");
  double inv = 1.0 / std::sqrt(static_cast<double>(tq.dim(1)));
  Var logits = num::scale(num::matmul_nt(q, k), inv);
  Var probs = num::masked_softmax_band(logits, hw);
  return num::matmul(probs, v);
}

namespace {

Var mha_heads(Var q_src, Var kv_src, const MhaParams& p, int hw, Binder& bind) {
  int dh = p.head_width();
  Var q = num::matmul(q_src, bind(p.w_q));
  Var k = num::matmul(kv_src, bind(p.w_k));
  Var v = num::matmul(kv_src, bind(p.w_v));
  Var cat;
  for (int h = 0; h < p.heads; ++h) {
    Var qh = num::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = num::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = num::slice_cols(v, h * dh, (h + 1) * dh);
    Var oh = scaled_dot_attention(qh, kh, vh, hw);
    cat = h == 0 ? oh : num::concat_cols(cat, oh);
  }
  return num::matmul(cat, bind(p.w_o));
}

}  // namespace

Var sliding_window_mha(Var x, const MhaParams& p, const BandMask& m,
                       Binder& bind) {
  if (x.val().dim(1) != p.width())
    throw std::invalid_argument("sliding_window_mha: width mismatch");
  return mha_heads(x, x, p, m.half(), bind);
}

Var full_mha(Var x, const MhaParams& p, Binder& bind) {
  return mha_heads(x, x, p, -1, bind);
}

Var cross_mha(Var x, Var ctx, const MhaParams& p, Binder& bind) {
  return mha_heads(x, ctx, p, -1, bind);
}

// Fused batched multi-head attention. Only the allowed strip of logits is
// formed per head: for hw >= 0 that is the (2hw+1)-diagonal band, so time
// and memory are O(w L) per head; hw < 0 keeps all Lk columns (used for the
// encoder-decoder bridge). One tape node regardless of batch and heads.
Var fused_mha(Var q_src, Var kv_src, const MhaParams& p, int hw, Binder& bind) {
  const Tensor& tq = q_src.val();
  const Tensor& tk = kv_src.val();
  if (tq.rank() != 3 || tk.rank() != 3)
    throw std::invalid_argument("fused_mha: expect [B,L,d] inputs");
  if (tq.dim(2) != p.width() || tk.dim(2) != p.width())
    throw std::invalid_argument("fused_mha: width mismatch");
  if (tq.dim(0) != tk.dim(0))
    throw std::invalid_argument("fused_mha: batch mismatch");
  if (hw >= 0 && tq.dim(1) != tk.dim(1))
    throw std::invalid_argument("fused_mha: band requires equal lengths");
  num::Tape& tape = bind.tape();
  Var vwq = bind(p.w_q), vwk = bind(p.w_k), vwv = bind(p.w_v), vwo = bind(p.w_o);

  int B = tq.dim(0), Lq = tq.dim(1), Lk = tk.dim(1), d = tq.dim(2);
  int heads = p.heads, dh = d / heads;
  int span = hw < 0 ? Lk : 2 * hw + 1;
  double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  long rq = static_cast<long>(B) * Lq, rk = static_cast<long>(B) * Lk;

  Tensor q = Tensor::zeros({B, Lq, d});
  Tensor k = Tensor::zeros({B, Lk, d});
  Tensor v = Tensor::zeros({B, Lk, d});
  num::kern::matmul_acc(tq.data(), p.w_q.data(), q.mutable_data(),
                   static_cast<int>(rq), d, d);
  num::kern::matmul_acc(tk.data(), p.w_k.data(), k.mutable_data(),
                   static_cast<int>(rk), d, d);
  num::kern::matmul_acc(tk.data(), p.w_v.data(), v.mutable_data(),
                   static_cast<int>(rk), d, d);

  Tensor probs = Tensor::uninit({B, heads, Lq, span});
  Tensor heads_out = Tensor::zeros({B, Lq, d});
  for (int b = 0; b < B; ++b) {
    const double* qb = q.data() + static_cast<long>(b) * Lq * d;
    const double* kb = k.data() + static_cast<long>(b) * Lk * d;
    const double* vb = v.data() + static_cast<long>(b) * Lk * d;
    double* ob = heads_out.mutable_data() + static_cast<long>(b) * Lq * d;
    for (int h = 0; h < heads; ++h) {
      int c0 = h * dh;
      double* ph = probs.mutable_data() +
                   ((static_cast<long>(b) * heads + h) * Lq) * span;
      for (int i = 0; i < Lq; ++i) {
        int j0 = hw < 0 ? 0 : std::max(0, i - hw);
        int j1 = hw < 0 ? Lk - 1 : std::min(Lk - 1, i + hw);
        int base = hw < 0 ? 0 : i - hw;
        double* row = ph + static_cast<long>(i) * span;
        const double* qi = qb + static_cast<long>(i) * d + c0;
        double mx = 0.0;
        for (int j = j0; j <= j1; ++j) {
          const double* kj = kb + static_cast<long>(j) * d + c0;
          double acc = 0.0;
          for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          acc *= inv;
          row[j - base] = acc;
          mx = (j == j0) ? acc : std::max(mx, acc);
        }
        double z = 0.0;
        for (int j = j0; j <= j1; ++j) {
          double e = std::exp(row[j - base] - mx);
          row[j - base] = e;
          z += e;
        }
        double zi = 1.0 / z;
        double* oi = ob + static_cast<long>(i) * d + c0;
        for (int j = j0; j <= j1; ++j) {
          double pij = row[j - base] * zi;
          row[j - base] = pij;
          const double* vj = vb + static_cast<long>(j) * d + c0;
          for (int c = 0; c < dh; ++c) oi[c] += pij * vj[c];
        }
      }
    }
  }
  Tensor y = Tensor::zeros({B, Lq, d});
  num::kern::matmul_acc(heads_out.data(), p.w_o.data(), y.mutable_data(),
                   static_cast<int>(rq), d, d);
  check_finite(y, "fused_mha");

  int ix = q_src.id, ikv = kv_src.id;
  int iq = vwq.id, ik = vwk.id, iv = vwv.id, io = vwo.id;
  return tape.record(
      std::move(y), {q_src, kv_src, vwq, vwk, vwv, vwo},
      [ix, ikv, iq, ik, iv, io, B, Lq, Lk, d, heads, dh, hw, span, inv, q, k,
       v, probs, heads_out](num::Tape& t, int self) {
        const Tensor& gy = *t.grad(Var{&t, self});
        const Tensor& xq = t.val(Var{&t, ix});
        const Tensor& xkv = t.val(Var{&t, ikv});
        const Tensor& wq = t.val(Var{&t, iq});
        const Tensor& wk = t.val(Var{&t, ik});
        const Tensor& wv = t.val(Var{&t, iv});
        const Tensor& wo = t.val(Var{&t, io});
        long rq = static_cast<long>(B) * Lq, rk = static_cast<long>(B) * Lk;

        if (t.needs_grad(Var{&t, io}))
          num::kern::matmul_tn_acc(heads_out.data(), gy.data(),
                              t.grad_buffer(io).mutable_data(), d,
                              static_cast<int>(rq), d);
        Tensor gh = Tensor::zeros({B, Lq, d});
        num::kern::matmul_nt_acc(gy.data(), wo.data(), gh.mutable_data(),
                            static_cast<int>(rq), d, d);

        Tensor gq = Tensor::zeros({B, Lq, d});
        Tensor gk = Tensor::zeros({B, Lk, d});
        Tensor gv = Tensor::zeros({B, Lk, d});
        std::vector<double> gp(static_cast<size_t>(span));
        for (int b = 0; b < B; ++b) {
          const double* qb = q.data() + static_cast<long>(b) * Lq * d;
          const double* kb = k.data() + static_cast<long>(b) * Lk * d;
          const double* vb = v.data() + static_cast<long>(b) * Lk * d;
          const double* ghb = gh.data() + static_cast<long>(b) * Lq * d;
          double* gqb = gq.mutable_data() + static_cast<long>(b) * Lq * d;
          double* gkb = gk.mutable_data() + static_cast<long>(b) * Lk * d;
          double* gvb = gv.mutable_data() + static_cast<long>(b) * Lk * d;
          for (int h = 0; h < heads; ++h) {
            int c0 = h * dh;
            const double* ph = probs.data() +
                               ((static_cast<long>(b) * heads + h) * Lq) * span;
            for (int i = 0; i < Lq; ++i) {
              int j0 = hw < 0 ? 0 : std::max(0, i - hw);
              int j1 = hw < 0 ? Lk - 1 : std::min(Lk - 1, i + hw);
              int base = hw < 0 ? 0 : i - hw;
              const double* prow = ph + static_cast<long>(i) * span;
              const double* ghi = ghb + static_cast<long>(i) * d + c0;
              double dot = 0.0;
              for (int j = j0; j <= j1; ++j) {
                int c = j - base;
                const double* vj = vb + static_cast<long>(j) * d + c0;
                double acc = 0.0;
                for (int cc = 0; cc < dh; ++cc) acc += ghi[cc] * vj[cc];
                gp[static_cast<size_t>(c)] = acc;
                dot += acc * prow[c];
                double* gvj = gvb + static_cast<long>(j) * d + c0;
                double pij = prow[c];
                for (int cc = 0; cc < dh; ++cc) gvj[cc] += pij * ghi[cc];
              }
              const double* qi = qb + static_cast<long>(i) * d + c0;
              double* gqi = gqb + static_cast<long>(i) * d + c0;
              for (int j = j0; j <= j1; ++j) {
                int c = j - base;
                double dl = prow[c] * (gp[static_cast<size_t>(c)] - dot) * inv;
                const double* kj = kb + static_cast<long>(j) * d + c0;
                double* gkj = gkb + static_cast<long>(j) * d + c0;
                for (int cc = 0; cc < dh; ++cc) {
                  gqi[cc] += dl * kj[cc];
                  gkj[cc] += dl * qi[cc];
                }
              }
            }
          }
        }
        if (t.needs_grad(Var{&t, iq}))
          num::kern::matmul_tn_acc(xq.data(), gq.data(),
                              t.grad_buffer(iq).mutable_data(), d,
                              static_cast<int>(rq), d);
        if (t.needs_grad(Var{&t, ik}))
          num::kern::matmul_tn_acc(xkv.data(), gk.data(),
                              t.grad_buffer(ik).mutable_data(), d,
                              static_cast<int>(rk), d);
        if (t.needs_grad(Var{&t, iv}))
          num::kern::matmul_tn_acc(xkv.data(), gv.data(),
                              t.grad_buffer(iv).mutable_data(), d,
                              static_cast<int>(rk), d);
        if (t.needs_grad(Var{&t, ix}))
          num::kern::matmul_nt_acc(gq.data(), wq.data(),
                              t.grad_buffer(ix).mutable_data(),
                              static_cast<int>(rq), d, d);
        if (t.needs_grad(Var{&t, ikv})) {
          double* gx = t.grad_buffer(ikv).mutable_data();
          num::kern::matmul_nt_acc(gk.data(), wk.data(), gx, static_cast<int>(rk), d, d);
          num::kern::matmul_nt_acc(gv.data(), wv.data(), gx, static_cast<int>(rk), d, d);
        }
      });
}

Var banded_mha_fast(Var x, const MhaParams& p, const BandMask& m,
                    Binder& bind) {
  const Tensor& tx = x.val();
  if (tx.rank() != 2 || tx.dim(1) != p.width())
    throw std::invalid_argument("banded_mha_fast: x must be [L,d]");
  int L = tx.dim(0), d = tx.dim(1);
  Var x3 = num::reshape(x, {1, L, d});
  Var y = fused_mha(x3, x3, p, m.half(), bind);
  return num::reshape(y, {L, d});
}

}  // namespace conformer::attn
