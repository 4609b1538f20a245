#include "conformer/normflow.hpp"

#include <cmath>

namespace conformer::flow {

using num::Binder;
using num::Shape;
using num::Tensor;
using num::Var;

Fcn Fcn::init(int in, int hidden, int out, num::Rng& rng) {
  Fcn f;
  double a1 = std::sqrt(6.0 / (in + hidden));
  double a2 = std::sqrt(6.0 / (hidden + out));
  f.w1 = rng.uniform_tensor({hidden, in}, -a1, a1);
  f.b1 = Tensor::zeros({hidden});
  f.w2 = rng.uniform_tensor({out, hidden}, -a2, a2);
  f.b2 = Tensor::zeros({out});
  return f;
}

Conditioner Conditioner::init(int in, int hidden, int out, num::Rng& rng) {
  return Conditioner{Fcn::init(in, hidden, out, rng),
                     Fcn::init(in, hidden, out, rng)};
}

namespace {
// rows-in, rows-out; x may be rank-2 [rows,in] or rank-3 [B,L,in]
Var apply_rows(const Fcn& f, Var x, Binder& bind,
               const std::function<Var(Var)>& post) {
  const Tensor& t = x.val();
  bool r3 = t.rank() == 3;
  int rows = r3 ? t.dim(0) * t.dim(1) : t.dim(0);
  int in = r3 ? t.dim(2) : t.dim(1);
  Var flat = r3 ? num::reshape(x, {rows, in}) : x;
  Var h = num::activation(
      num::add_rowvec(num::matmul_nt(flat, bind(f.w1)), bind(f.b1)),
      num::Act::Tanh);
  Var out = num::add_rowvec(num::matmul_nt(h, bind(f.w2)), bind(f.b2));
  out = post(out);
  int dout = out.val().dim(1);
  return r3 ? num::reshape(out, {t.dim(0), t.dim(1), dout}) : out;
}
}  // namespace

Var fcn_apply(const Fcn& f, Var x, Binder& bind) {
  return apply_rows(f, x, bind, [](Var v) { return v; });
}

Var sigma_apply(const Fcn& f, Var x, Binder& bind) {
  return apply_rows(f, x, bind, [](Var v) {
    return num::add_scalar(num::activation(v, num::Act::Softplus), 1e-6);
  });
}

FlowParams FlowParams::init(int d, int d_t, int T, num::Rng& rng) {
  if (T < 0) throw std::invalid_argument("FlowParams: T must be >= 0");
  FlowParams p;
  p.enc = Conditioner::init(d, d, d, rng);
  p.head = Conditioner::init(d, d, d, rng);
  for (int t = 0; t < T; ++t) p.steps.push_back(Conditioner::init(2 * d, d, d, rng));
  double a = std::sqrt(6.0 / (d + d_t));
  p.w_out = rng.uniform_tensor({d_t, d}, -a, a);
  p.b_out = Tensor::zeros({d_t});
  return p;
}

NfVariant nf_variant_from(const std::string& name) {
  if (name == "full") return NfVariant::Full;
  if (name == "z-e") return NfVariant::EncoderOnly;
  if (name == "z-d") return NfVariant::DecoderOnly;
  if (name == "z-0") return NfVariant::InitOnly;
  if (name == "off") return NfVariant::Off;
  throw std::invalid_argument("unknown flow variant '" + name + "'");
}

std::string to_string(NfVariant v) {
  switch (v) {
    case NfVariant::Full: return "full";
    case NfVariant::EncoderOnly: return "z-e";
    case NfVariant::DecoderOnly: return "z-d";
    case NfVariant::InitOnly: return "z-0";
    case NfVariant::Off: return "off";
  }
  return "?";
}

Var encoder_latent(Var h_e, Var eps, const Conditioner& c, Binder& bind) {
  if (!h_e.val().same_shape(eps.val()))
    throw std::invalid_argument("encoder_latent: eps shape mismatch");
  Var mu = fcn_apply(c.mu, h_e, bind);
  Var sg = sigma_apply(c.sigma, h_e, bind);
  return num::add(mu, num::mul(sg, eps));
}

Var init_flow(Var h_d, Var z_e_aligned, const Conditioner& c, Binder& bind) {
  if (!h_d.val().same_shape(z_e_aligned.val()))
    throw std::invalid_argument("init_flow: latent length mismatch");
  Var mu = fcn_apply(c.mu, h_d, bind);
  Var sg = sigma_apply(c.sigma, h_d, bind);
  return num::add(mu, num::mul(sg, z_e_aligned));
}

Var flow_chain(Var z0, Var h_d, const std::vector<Conditioner>& steps,
               Binder& bind) {
  Var z = z0;
  const Tensor& t = h_d.val();
  int rows = t.rank() == 3 ? t.dim(0) * t.dim(1) : t.dim(0);
  int d = t.rank() == 3 ? t.dim(2) : t.dim(1);
  Var hflat = t.rank() == 3 ? num::reshape(h_d, {rows, d}) : h_d;
  for (const Conditioner& c : steps) {
    Var zflat = z.val().rank() == 3 ? num::reshape(z, {rows, d}) : z;
    Var joint = num::concat_cols(hflat, zflat);
    Var mu = fcn_apply(c.mu, joint, bind);
    Var sg = sigma_apply(c.sigma, joint, bind);
    Var znext = num::add(mu, num::mul(sg, zflat));
    z = t.rank() == 3 ? num::reshape(znext, {t.dim(0), t.dim(1), d}) : znext;
  }
  return z;
}

Shape eps_shape(NfVariant v, int B, int L_e, int L_d, int d) {
  if (v == NfVariant::DecoderOnly) return {B, L_d, d};
  return {B, L_e, d};
}

namespace {
Var project_tail(Var z, const FlowParams& p, int L_y, Binder& bind) {
  const Tensor& t = z.val();
  int B = t.dim(0), L = t.dim(1), d = t.dim(2);
  Var flat = num::reshape(z, {B * L, d});
  Var rows = num::add_rowvec(num::matmul_nt(flat, bind(p.w_out)), bind(p.b_out));
  int d_t = rows.val().dim(1);
  Var full = num::reshape(rows, {B, L, d_t});
  return num::slice_time(full, L - L_y, L);
}

// mean-pool the encoder latent over positions and spread it along the
// decoder positions (the two sequences have different lengths)
Var align_to_decoder(Var z_e, int L_d) {
  return num::broadcast_time(num::mean_time(z_e), L_d);
}
}  // namespace

Var flow_output(Var h_e, Var h_d, const FlowParams& p, NfVariant variant,
                int L_y, Binder& bind, const Tensor& eps) {
  if (variant == NfVariant::Off) return Var{};
  const Tensor& td = h_d.val();
  int L_d = td.dim(1);
  num::Tape& tape = bind.tape();
  Var veps = tape.constant(eps);
  switch (variant) {
    case NfVariant::EncoderOnly: {
      Var z_e = encoder_latent(h_e, veps, p.enc, bind);
      return project_tail(align_to_decoder(z_e, L_d), p, L_y, bind);
    }
    case NfVariant::DecoderOnly: {
      Var z_d = encoder_latent(h_d, veps, p.enc, bind);
      return project_tail(z_d, p, L_y, bind);
    }
    case NfVariant::InitOnly: {
      Var z_e = encoder_latent(h_e, veps, p.enc, bind);
      Var z0 = init_flow(h_d, align_to_decoder(z_e, L_d), p.head, bind);
      return project_tail(z0, p, L_y, bind);
    }
    case NfVariant::Full: {
      Var z_e = encoder_latent(h_e, veps, p.enc, bind);
      Var z0 = init_flow(h_d, align_to_decoder(z_e, L_d), p.head, bind);
      Var zT = flow_chain(z0, h_d, p.steps, bind);
      return project_tail(zT, p, L_y, bind);
    }
    default:
      throw std::invalid_argument("flow_output: bad variant");
  }
}

FlowSample flow_forecast(Var h_e, Var h_d, const FlowParams& p,
                         NfVariant variant, int L_y, int n_samples,
                         num::Rng& rng, Binder& bind) {
  if (n_samples < 1)
    throw std::invalid_argument("flow_forecast: n_samples must be >= 1");
  if (variant == NfVariant::Off)
    throw std::invalid_argument("flow_forecast: flow branch is off");
  const Tensor& te = h_e.val();
  const Tensor& td = h_d.val();
  Shape es = eps_shape(variant, te.dim(0), te.dim(1), td.dim(1), te.dim(2));
  Tensor sum, sumsq;
  for (int s = 0; s < n_samples; ++s) {
    Tensor eps = rng.normal_tensor(es);
    Var out = flow_output(h_e, h_d, p, variant, L_y, bind, eps);
    const Tensor& v = out.val();
    if (s == 0) {
      sum = v.clone();
      sumsq = Tensor::zeros(v.shape());
      double* q = sumsq.mutable_data();
      for (int64_t i = 0; i < v.numel(); ++i) q[i] = v[i] * v[i];
    } else {
      double* a = sum.mutable_data();
      double* q = sumsq.mutable_data();
      for (int64_t i = 0; i < v.numel(); ++i) {
        a[i] += v[i];
        q[i] += v[i] * v[i];
      }
    }
  }
  FlowSample out;
  out.mean = Tensor::zeros(sum.shape());
  out.variance = Tensor::zeros(sum.shape());
  double inv = 1.0 / n_samples;
  for (int64_t i = 0; i < sum.numel(); ++i) {
    double m = sum[i] * inv;
    out.mean.mutable_data()[i] = m;
    double v = sumsq[i] * inv - m * m;
    out.variance.mutable_data()[i] = v > 0 ? v : 0.0;
  }
  return out;
}

}  // namespace conformer::flow
