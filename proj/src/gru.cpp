#include "conformer/gru.hpp"

#include <cmath>

#include "conformer/kernels.hpp"

namespace conformer::nn {

using num::Binder;
using num::Tensor;
using num::Var;

GruParams GruParams::init(int d_in, int d_h, int num_layers, num::Rng& rng) {
  if (num_layers < 1) throw std::invalid_argument("GruParams: need >= 1 layer");
  GruParams p;
  for (int l = 0; l < num_layers; ++l) {
    int din = l == 0 ? d_in : d_h;
    double ai = std::sqrt(6.0 / (din + d_h));
    double ah = std::sqrt(6.0 / (d_h + d_h));
    GruLayerWeights w;
    w.w_ir = rng.uniform_tensor({d_h, din}, -ai, ai);
    w.w_iz = rng.uniform_tensor({d_h, din}, -ai, ai);
    w.w_in = rng.uniform_tensor({d_h, din}, -ai, ai);
    w.w_hr = rng.uniform_tensor({d_h, d_h}, -ah, ah);
    w.w_hz = rng.uniform_tensor({d_h, d_h}, -ah, ah);
    w.w_hn = rng.uniform_tensor({d_h, d_h}, -ah, ah);
    w.b_ir = Tensor::zeros({d_h});
    w.b_iz = Tensor::zeros({d_h});
    w.b_in = Tensor::zeros({d_h});
    w.b_hr = Tensor::zeros({d_h});
    w.b_hz = Tensor::zeros({d_h});
    w.b_hn = Tensor::zeros({d_h});
    p.layers.push_back(std::move(w));
  }
  return p;
}

namespace {

double sigmoid_s(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// one fused GRU layer over a [B,L,din] sequence
Var gru_layer(Var x3, const GruLayerWeights& w, Binder& bind,
              const Tensor* h0) {
  const Tensor& tx = x3.val();
  int B = tx.dim(0), L = tx.dim(1), din = tx.dim(2);
  int dh = w.w_hr.dim(0);
  if (w.w_ir.dim(1) != din)
    throw std::invalid_argument("gru_forward: input width mismatch");
  num::Tape& tape = bind.tape();
  Var vw[12] = {bind(w.w_ir), bind(w.w_iz), bind(w.w_in), bind(w.w_hr),
                bind(w.w_hz), bind(w.w_hn), bind(w.b_ir), bind(w.b_iz),
                bind(w.b_in), bind(w.b_hr), bind(w.b_hz), bind(w.b_hn)};

  long BL = static_cast<long>(B) * L;
  // input-side pre-activations for the whole sequence in three gemms
  Tensor xi_r = Tensor::zeros({B, L, dh});
  Tensor xi_z = Tensor::zeros({B, L, dh});
  Tensor xi_n = Tensor::zeros({B, L, dh});
  num::kern::matmul_nt_acc(tx.data(), w.w_ir.data(), xi_r.mutable_data(),
                      static_cast<int>(BL), din, dh);
  num::kern::matmul_nt_acc(tx.data(), w.w_iz.data(), xi_z.mutable_data(),
                      static_cast<int>(BL), din, dh);
  num::kern::matmul_nt_acc(tx.data(), w.w_in.data(), xi_n.mutable_data(),
                      static_cast<int>(BL), din, dh);
  {
    const double *bir = w.b_ir.data(), *biz = w.b_iz.data(), *bin = w.b_in.data();
    double* pr = xi_r.mutable_data();
    double* pz = xi_z.mutable_data();
    double* pn = xi_n.mutable_data();
    for (long i = 0; i < BL; ++i)
      for (int c = 0; c < dh; ++c) {
        pr[i * dh + c] += bir[c];
        pz[i * dh + c] += biz[c];
        pn[i * dh + c] += bin[c];
      }
  }

  // hidden weights transposed once so the recurrence streams matmul_acc
  Tensor whr_t = Tensor::uninit({dh, dh});
  Tensor whz_t = Tensor::uninit({dh, dh});
  Tensor whn_t = Tensor::uninit({dh, dh});
  for (int i = 0; i < dh; ++i)
    for (int j = 0; j < dh; ++j) {
      whr_t.mutable_data()[static_cast<long>(j) * dh + i] = w.w_hr.at({i, j});
      whz_t.mutable_data()[static_cast<long>(j) * dh + i] = w.w_hz.at({i, j});
      whn_t.mutable_data()[static_cast<long>(j) * dh + i] = w.w_hn.at({i, j});
    }

  Tensor rs = Tensor::uninit({L, B, dh});
  Tensor zs = Tensor::uninit({L, B, dh});
  Tensor ns = Tensor::uninit({L, B, dh});
  Tensor hhs = Tensor::zeros({L, B, dh});  // h_{t-1} W_hn' + b_hn
  Tensor hs = Tensor::uninit({B, L, dh});  // layer output, batch-major

  Tensor hprev = Tensor::zeros({B, dh});
  if (h0) {
    if (h0->rank() != 1 || h0->dim(0) != dh)
      throw std::invalid_argument("gru_forward: h0 must be [dh]");
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < dh; ++c)
        hprev.mutable_data()[static_cast<long>(b) * dh + c] = (*h0)[c];
  }
  Tensor hr = Tensor::uninit({B, dh});
  Tensor hz = Tensor::uninit({B, dh});
  long Bdh = static_cast<long>(B) * dh;
  const double *bhr = w.b_hr.data(), *bhz = w.b_hz.data(), *bhn = w.b_hn.data();
  for (int t = 0; t < L; ++t) {
    double* hh = hhs.mutable_data() + static_cast<long>(t) * Bdh;
    double* r = rs.mutable_data() + static_cast<long>(t) * Bdh;
    double* z = zs.mutable_data() + static_cast<long>(t) * Bdh;
    double* n = ns.mutable_data() + static_cast<long>(t) * Bdh;
    std::fill(hr.mutable_data(), hr.mutable_data() + Bdh, 0.0);
    std::fill(hz.mutable_data(), hz.mutable_data() + Bdh, 0.0);
    num::kern::matmul_acc(hprev.data(), whr_t.data(), hr.mutable_data(), B, dh, dh);
    num::kern::matmul_acc(hprev.data(), whz_t.data(), hz.mutable_data(), B, dh, dh);
    num::kern::matmul_acc(hprev.data(), whn_t.data(), hh, B, dh, dh);
    const double* hrp = hr.data();
    const double* hzp = hz.data();
    for (int b = 0; b < B; ++b) {
      long o = static_cast<long>(b) * dh;
      const double* xr = xi_r.data() + (static_cast<long>(b) * L + t) * dh;
      const double* xz = xi_z.data() + (static_cast<long>(b) * L + t) * dh;
      const double* xn = xi_n.data() + (static_cast<long>(b) * L + t) * dh;
      double* hout = hs.mutable_data() + (static_cast<long>(b) * L + t) * dh;
      double* hp = hprev.mutable_data() + o;
      for (int c = 0; c < dh; ++c) {
        hh[o + c] += bhn[c];
        double rv = sigmoid_s(xr[c] + hrp[o + c] + bhr[c]);
        double zv = sigmoid_s(xz[c] + hzp[o + c] + bhz[c]);
        double nv = std::tanh(xn[c] + rv * hh[o + c]);
        double hv = (1.0 - zv) * nv + zv * hp[c];
        r[o + c] = rv;
        z[o + c] = zv;
        n[o + c] = nv;
        hout[c] = hv;
        hp[c] = hv;
      }
    }
  }
  check_finite(hs, "gru_forward");

  int ix = x3.id;
  int iw[12];
  for (int i = 0; i < 12; ++i) iw[i] = vw[i].id;
  Tensor h0c = h0 ? h0->clone() : Tensor();
  return tape.record(
      std::move(hs),
      {x3, vw[0], vw[1], vw[2], vw[3], vw[4], vw[5], vw[6], vw[7], vw[8],
       vw[9], vw[10], vw[11]},
      [ix, iw, B, L, din, dh, rs, zs, ns, hhs, h0c](num::Tape& t, int self) {
        const Tensor& gy = *t.grad(Var{&t, self});  // [B,L,dh]
        const Tensor& x = t.val(Var{&t, ix});
        const Tensor& hs = t.val(Var{&t, self});
        const Tensor& w_ir = t.val(Var{&t, iw[0]});
        const Tensor& w_iz = t.val(Var{&t, iw[1]});
        const Tensor& w_in = t.val(Var{&t, iw[2]});
        const Tensor& w_hr = t.val(Var{&t, iw[3]});
        const Tensor& w_hz = t.val(Var{&t, iw[4]});
        const Tensor& w_hn = t.val(Var{&t, iw[5]});

        long BL = static_cast<long>(B) * L;
        long Bdh = static_cast<long>(B) * dh;
        int dh3 = 3 * dh;
        // gate activations staged in stacked blocks so every weight and
        // input gradient reduces to one large gemm after the time loop
        Tensor s_h = Tensor::uninit({B, L, dh3});  // (da_r | da_z | d_hh)
        Tensor s_i = Tensor::uninit({B, L, dh3});  // (da_r | da_z | da_n)
        Tensor hprev_all = Tensor::uninit({B, L, dh});
        Tensor st = Tensor::uninit({B, dh3});  // per-step slab for the carry
        Tensor carry = Tensor::zeros({B, dh});
        // [W_hr; W_hz; W_hn] stacked for the carry gemm
        Tensor w_hstack = Tensor::uninit({dh3, dh});
        for (int i = 0; i < dh; ++i)
          for (int j = 0; j < dh; ++j) {
            w_hstack.mutable_data()[static_cast<long>(i) * dh + j] = w_hr.at({i, j});
            w_hstack.mutable_data()[(static_cast<long>(dh) + i) * dh + j] = w_hz.at({i, j});
            w_hstack.mutable_data()[(2l * dh + i) * dh + j] = w_hn.at({i, j});
          }

        for (int tt = L - 1; tt >= 0; --tt) {
          const double* r = rs.data() + static_cast<long>(tt) * Bdh;
          const double* z = zs.data() + static_cast<long>(tt) * Bdh;
          const double* n = ns.data() + static_cast<long>(tt) * Bdh;
          const double* hh = hhs.data() + static_cast<long>(tt) * Bdh;
          for (int b = 0; b < B; ++b) {
            long o = static_cast<long>(b) * dh;
            long row = static_cast<long>(b) * L + tt;
            const double* gout = gy.data() + row * dh;
            const double* hp;
            double h0v = 0.0;
            if (tt == 0) {
              hp = h0c.defined() ? h0c.data() : &h0v;
            } else {
              hp = hs.data() + (row - 1) * dh;
            }
            bool hp_scalar = tt == 0 && !h0c.defined();
            double* car = carry.mutable_data() + o;
            double* sh = s_h.mutable_data() + row * dh3;
            double* si = s_i.mutable_data() + row * dh3;
            double* stb = st.mutable_data() + static_cast<long>(b) * dh3;
            double* hpa = hprev_all.mutable_data() + row * dh;
            for (int c = 0; c < dh; ++c) {
              double hprev_c = hp_scalar ? 0.0 : hp[c];
              double dh_t = gout[c] + car[c];
              double zv = z[o + c], nv = n[o + c], rv = r[o + c];
              double dz = dh_t * (hprev_c - nv);
              double dn = dh_t * (1.0 - zv);
              double danv = dn * (1.0 - nv * nv);
              double dhhv = danv * rv;
              double drv = danv * hh[o + c];
              double darv = drv * rv * (1.0 - rv);
              double dazv = dz * zv * (1.0 - zv);
              car[c] = dh_t * zv;  // recurrent carry, W_h* terms added below
              sh[c] = darv;
              sh[dh + c] = dazv;
              sh[2 * dh + c] = dhhv;
              si[c] = darv;
              si[dh + c] = dazv;
              si[2 * dh + c] = danv;
              stb[c] = darv;
              stb[dh + c] = dazv;
              stb[2 * dh + c] = dhhv;
              hpa[c] = hprev_c;
            }
          }
          num::kern::matmul_acc(st.data(), w_hstack.data(),
                                carry.mutable_data(), B, dh3, dh);
        }

        auto add_grad = [&](int id, const Tensor& g) {
          if (!t.needs_grad(Var{&t, id})) return;
          num::kern::axpy(1.0, g.data(), t.grad_buffer(id).mutable_data(), g.numel());
        };
        auto any_needs = [&](int a, int b2, int c) {
          return t.needs_grad(Var{&t, a}) || t.needs_grad(Var{&t, b2}) ||
                 t.needs_grad(Var{&t, c});
        };

        if (any_needs(iw[0], iw[1], iw[2])) {
          Tensor dwi = Tensor::zeros({dh3, din});
          num::kern::matmul_tn_acc(s_i.data(), x.data(), dwi.mutable_data(),
                                   dh3, static_cast<int>(BL), din);
          add_grad(iw[0], dwi.view_leading(0, dh));
          add_grad(iw[1], dwi.view_leading(dh, 2 * dh));
          add_grad(iw[2], dwi.view_leading(2 * dh, dh3));
        }
        if (any_needs(iw[3], iw[4], iw[5])) {
          Tensor dwh = Tensor::zeros({dh3, dh});
          num::kern::matmul_tn_acc(s_h.data(), hprev_all.data(),
                                   dwh.mutable_data(), dh3,
                                   static_cast<int>(BL), dh);
          add_grad(iw[3], dwh.view_leading(0, dh));
          add_grad(iw[4], dwh.view_leading(dh, 2 * dh));
          add_grad(iw[5], dwh.view_leading(2 * dh, dh3));
        }
        // biases: b_i* and b_h* of the r/z gates share the gradient; b_hn
        // differs from b_in by the reset gate factor
        Tensor dbs = Tensor::zeros({2, dh3});  // rows: input-side, hidden-side
        {
          double* bi = dbs.mutable_data();
          double* bh = dbs.mutable_data() + dh3;
          const double* pi = s_i.data();
          const double* ph = s_h.data();
          for (long i = 0; i < BL; ++i)
            for (int c = 0; c < dh3; ++c) {
              bi[c] += pi[i * dh3 + c];
              bh[c] += ph[i * dh3 + c];
            }
        }
        Tensor db = dbs.view_leading(0, 1).reshaped({dh3});
        Tensor dbh = dbs.view_leading(1, 2).reshaped({dh3});
        add_grad(iw[6], db.view_leading(0, dh));
        add_grad(iw[7], db.view_leading(dh, 2 * dh));
        add_grad(iw[8], db.view_leading(2 * dh, dh3));
        add_grad(iw[9], dbh.view_leading(0, dh));
        add_grad(iw[10], dbh.view_leading(dh, 2 * dh));
        add_grad(iw[11], dbh.view_leading(2 * dh, dh3));
        // input grads: one gemm against [W_ir; W_iz; W_in]
        if (t.needs_grad(Var{&t, ix})) {
          Tensor w_istack = Tensor::uninit({dh3, din});
          for (int i = 0; i < dh; ++i)
            for (int j = 0; j < din; ++j) {
              w_istack.mutable_data()[static_cast<long>(i) * din + j] = w_ir.at({i, j});
              w_istack.mutable_data()[(static_cast<long>(dh) + i) * din + j] = w_iz.at({i, j});
              w_istack.mutable_data()[(2l * dh + i) * din + j] = w_in.at({i, j});
            }
          num::kern::matmul_acc(s_i.data(), w_istack.data(),
                                t.grad_buffer(ix).mutable_data(),
                                static_cast<int>(BL), dh3, din);
        }
      });
}

}  // namespace

GruOut gru_forward(Var x, const GruParams& p, Binder& bind, const Tensor* h0) {
  const Tensor& tx = x.val();
  bool batched = tx.rank() == 3;
  if (!batched && tx.rank() != 2)
    throw std::invalid_argument("gru_forward: x must be [L,din] or [B,L,din]");
  Var x3 = batched ? x : num::reshape(x, {1, tx.dim(0), tx.dim(1)});
  Var h = x3;
  for (const auto& layer : p.layers) h = gru_layer(h, layer, bind, h0);
  if (!batched) {
    const Tensor& th = h.val();
    h = num::reshape(h, {th.dim(1), th.dim(2)});
  }
  return GruOut{h, h};
}

}  // namespace conformer::nn
