#include "conformer/inputrep.hpp"

#include <cmath>

#include "conformer/dataio.hpp"
#include "conformer/fft.hpp"
#include "conformer/kernels.hpp"

namespace conformer::rep {

using num::Binder;
using num::Tensor;
using num::Var;

namespace {

num::Tape& bind_tape(Var v) { return *v.tape; }

std::vector<double> centered_column(const Tensor& x, int j) {
  int L = x.dim(0);
  std::vector<double> col(static_cast<size_t>(L));
  double mean = 0;
  for (int t = 0; t < L; ++t) mean += x.at({t, j});
  mean /= L;
  for (int t = 0; t < L; ++t) col[static_cast<size_t>(t)] = x.at({t, j}) - mean;
  return col;
}

}  // namespace

std::vector<double> cross_correlation(const Tensor& x, int i, int j) {
  if (x.rank() != 2 || x.dim(0) < 2)
    throw std::invalid_argument("cross_correlation: need [L>=2, d_x] window");
  int L = x.dim(0);
  auto a = centered_column(x, i);
  auto b = centered_column(x, j);
  auto fa = num::rfft(a);
  auto fb = num::rfft(b);
  for (size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
  auto r = num::irfft(fa, L);
  for (double& v : r) v /= L;
  return r;  // r[tau] = (1/L) sum_t a(t) * b((t+tau) mod L)
}

Tensor correlation_matrix(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("correlation_matrix: rank-2 expected");
  int L = x.dim(0), d = x.dim(1);
  if (d == 0) throw std::invalid_argument("correlation_matrix: no variables");
  if (L < 2) throw std::invalid_argument("correlation_matrix: window too short");

  std::vector<std::vector<num::cplx>> spectra(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j)
    spectra[static_cast<size_t>(j)] = num::rfft(centered_column(x, j));

  Tensor mr = Tensor::zeros({d, d});
  std::vector<num::cplx> prod(spectra[0].size());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      for (size_t k = 0; k < prod.size(); ++k)
        prod[k] = std::conj(spectra[static_cast<size_t>(i)][k]) *
                  spectra[static_cast<size_t>(j)][k];
      auto r = num::irfft(prod, L);
      double best = r[0];
      for (double v : r) best = std::max(best, v);
      mr.mutable_data()[static_cast<long>(i) * d + j] = best / L;
    }
  return mr;
}

CorrelationWeights multivariate_correlation(const Tensor& x) {
  Tensor mr = correlation_matrix(x);
  return CorrelationWeights{num::softmax_tensor(mr, 1)};
}

std::vector<int> active_scales(int64_t interval_seconds) {
  // marks columns: 0 minute, 1 hour, 2 weekday, 3 day, 4 month
  if (interval_seconds > 0 && interval_seconds < 3600) return {0, 1, 2, 3, 4};
  if (interval_seconds >= 86400) return {2, 3, 4};
  return {1, 2, 3, 4};
}

MultiscaleEmbed MultiscaleEmbed::init(const std::vector<int>& scales, int L,
                                      int d, num::Rng& rng) {
  MultiscaleEmbed e;
  e.scales = scales;
  for (int s : scales) {
    if (s < 0 || s >= data::kNumScales)
      throw std::invalid_argument("MultiscaleEmbed: bad scale index");
    int card = data::kScaleCardinality[s];
    Tensor table = rng.normal_tensor({card, d});
    double* p = table.mutable_data();
    for (int64_t i = 0; i < table.numel(); ++i) p[i] *= 0.02;
    e.tables.push_back(std::move(table));
    double a = std::sqrt(6.0 / (L + L));
    e.mix.push_back(rng.uniform_tensor({L, L}, -a, a));
  }
  e.bias = Tensor::zeros({L, d});
  return e;
}

Var multiscale_embedding(const Tensor& marks, const MultiscaleEmbed& embed,
                         Binder& bind) {
  if (marks.rank() != 2 || marks.dim(1) != data::kNumScales)
    throw std::invalid_argument("multiscale_embedding: marks must be [L,5]");
  int L = marks.dim(0);
  if (L != embed.window_len())
    throw std::invalid_argument(
        "multiscale_embedding: window length does not match mixing weights");
  Var acc = bind(embed.bias);
  for (size_t k = 0; k < embed.scales.size(); ++k) {
    int col = embed.scales[k];
    int card = data::kScaleCardinality[col];
    std::vector<int> idx(static_cast<size_t>(L));
    for (int t = 0; t < L; ++t) {
      int code = static_cast<int>(marks.at({t, col}));
      if (code < 0 || code >= card)
        throw std::invalid_argument("multiscale_embedding: code out of range");
      idx[static_cast<size_t>(t)] = code;
    }
    Var gathered = num::gather_rows(bind(embed.tables[k]), idx);   // [L, d]
    Var mixed = num::matmul(bind(embed.mix[k]), gathered);         // [L, d]
    acc = num::add(acc, mixed);
  }
  return acc;
}

Var multiscale_embedding_batched(const std::vector<const Tensor*>& marks,
                                 const MultiscaleEmbed& embed, Binder& bind) {
  int B = static_cast<int>(marks.size());
  if (B == 0) throw std::invalid_argument("multiscale_embedding: empty batch");
  int L = embed.window_len(), d = embed.width();
  for (const Tensor* m : marks)
    if (m->rank() != 2 || m->dim(0) != L || m->dim(1) != data::kNumScales)
      throw std::invalid_argument(
          "multiscale_embedding: window length does not match mixing weights");
  Var acc;
  for (size_t k = 0; k < embed.scales.size(); ++k) {
    int col = embed.scales[k];
    int card = data::kScaleCardinality[col];
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(B) * L);
    for (const Tensor* m : marks)
      for (int t = 0; t < L; ++t) {
        int code = static_cast<int>(m->at({t, col}));
        if (code < 0 || code >= card)
          throw std::invalid_argument("multiscale_embedding: code out of range");
        idx.push_back(code);
      }
    Var gathered = num::reshape(num::gather_rows(bind(embed.tables[k]), idx),
                                {B, L, d});
    Var mixed = num::matmul_lhs_batched(bind(embed.mix[k]), gathered);
    acc = k == 0 ? mixed : num::add(acc, mixed);
  }
  return num::add_bias_time(acc, bind(embed.bias));
}

FusionParams FusionParams::init(int d, int d_x, int k_v, num::Rng& rng) {
  if (k_v % 2 == 0)
    throw std::invalid_argument("FusionParams: kernel size must be odd");
  FusionParams f;
  double a = std::sqrt(6.0 / (d_x * k_v + d * k_v));
  f.w_v = rng.uniform_tensor({d, d_x, k_v}, -a, a);
  f.b_v = Tensor::zeros({d});
  return f;
}

FuseVariant fuse_variant_from(const std::string& name) {
  if (name == "full") return FuseVariant::Full;
  if (name == "minus-gamma") return FuseVariant::MinusGamma;
  if (name == "minus-r") return FuseVariant::MinusR;
  if (name == "minus-r-minus-gamma") return FuseVariant::MinusRMinusGamma;
  if (name == "minus-x") return FuseVariant::MinusX;
  if (name == "minus-x-minus-gamma") return FuseVariant::MinusXMinusGamma;
  if (name == "method1") return FuseVariant::Method1;
  if (name == "method2") return FuseVariant::Method2;
  if (name == "method3") return FuseVariant::Method3;
  if (name == "method4") return FuseVariant::Method4;
  throw std::invalid_argument("unknown input variant '" + name + "'");
}

std::string to_string(FuseVariant v) {
  switch (v) {
    case FuseVariant::Full: return "full";
    case FuseVariant::MinusGamma: return "minus-gamma";
    case FuseVariant::MinusR: return "minus-r";
    case FuseVariant::MinusRMinusGamma: return "minus-r-minus-gamma";
    case FuseVariant::MinusX: return "minus-x";
    case FuseVariant::MinusXMinusGamma: return "minus-x-minus-gamma";
    case FuseVariant::Method1: return "method1";
    case FuseVariant::Method2: return "method2";
    case FuseVariant::Method3: return "method3";
    case FuseVariant::Method4: return "method4";
  }
  return "?";
}

const std::vector<FuseVariant>& all_fuse_variants() {
  static const std::vector<FuseVariant> all = {
      FuseVariant::Full,    FuseVariant::MinusGamma,
      FuseVariant::MinusR,  FuseVariant::MinusRMinusGamma,
      FuseVariant::MinusX,  FuseVariant::MinusXMinusGamma,
      FuseVariant::Method1, FuseVariant::Method2,
      FuseVariant::Method3, FuseVariant::Method4};
  return all;
}

// Fused same-length convolution along time (im2row + one gemm per call).
// Column j*Cin+c of the unrolled buffer holds x[b, t+j-hw, c].
Var conv_time(Var x, Var w, Var b) {
  const Tensor& tx = x.val();
  const Tensor& tw = w.val();
  const Tensor& tb = b.val();
  bool batched = tx.rank() == 3;
  if (!batched && tx.rank() != 2)
    throw std::invalid_argument("conv_time: x must be [L,Cin] or [B,L,Cin]");
  int k = tw.dim(2);
  if (k % 2 == 0) throw std::invalid_argument("conv_time: kernel must be odd");
  int hw = (k - 1) / 2;
  int cout = tw.dim(0), cin = tw.dim(1);
  Var x3 = batched ? x : num::reshape(x, {1, tx.dim(0), tx.dim(1)});
  const Tensor& t3 = x3.val();
  int B = t3.dim(0), L = t3.dim(1);
  if (t3.dim(2) != cin)
    throw std::invalid_argument("conv_time: channel mismatch");
  if (tb.rank() != 1 || tb.dim(0) != cout)
    throw std::invalid_argument("conv_time: bias mismatch");
  num::Tape& tape = bind_tape(x3);

  long BL = static_cast<long>(B) * L;
  int ck = cin * k;
  Tensor im = Tensor::zeros({B, L, ck});
  {
    const double* px = t3.data();
    double* pi = im.mutable_data();
    for (int bb = 0; bb < B; ++bb)
      for (int t = 0; t < L; ++t) {
        double* row = pi + (static_cast<long>(bb) * L + t) * ck;
        for (int j = 0; j < k; ++j) {
          int src = t + j - hw;
          if (src < 0 || src >= L) continue;
          const double* xr = px + (static_cast<long>(bb) * L + src) * cin;
          double* dst = row + static_cast<long>(j) * cin;
          for (int c = 0; c < cin; ++c) dst[c] = xr[c];
        }
      }
  }
  // kernel reordered to [cout, k*cin] matching the im2row column layout
  Tensor wmat = Tensor::uninit({cout, ck});
  for (int o = 0; o < cout; ++o)
    for (int c = 0; c < cin; ++c)
      for (int j = 0; j < k; ++j)
        wmat.mutable_data()[static_cast<long>(o) * ck + j * cin + c] =
            tw.data()[(static_cast<long>(o) * cin + c) * k + j];

  Tensor out = Tensor::zeros({B, L, cout});
  num::kern::matmul_nt_acc(im.data(), wmat.data(), out.mutable_data(),
                           static_cast<int>(BL), ck, cout);
  {
    double* po = out.mutable_data();
    const double* pb = tb.data();
    for (long i = 0; i < BL; ++i)
      for (int o = 0; o < cout; ++o) po[i * cout + o] += pb[o];
  }
  check_finite(out, "conv_time");

  int ix = x3.id, iw = w.id, ib = b.id;
  Var y = tape.record(
      std::move(out), {x3, w, b},
      [ix, iw, ib, B, L, cin, cout, k, hw, ck, im, wmat](num::Tape& t, int self) {
        const Tensor& g = *t.grad(Var{&t, self});
        long BL = static_cast<long>(B) * L;
        if (t.needs_grad(Var{&t, ib})) {
          double* db = t.grad_buffer(ib).mutable_data();
          const double* pg = g.data();
          for (long i = 0; i < BL; ++i)
            for (int o = 0; o < cout; ++o) db[o] += pg[i * cout + o];
        }
        if (t.needs_grad(Var{&t, iw})) {
          Tensor dwmat = Tensor::zeros({cout, ck});
          num::kern::matmul_tn_acc(g.data(), im.data(), dwmat.mutable_data(),
                                   cout, static_cast<int>(BL), ck);
          double* dw = t.grad_buffer(iw).mutable_data();
          for (int o = 0; o < cout; ++o)
            for (int c = 0; c < cin; ++c)
              for (int j = 0; j < k; ++j)
                dw[(static_cast<long>(o) * cin + c) * k + j] +=
                    dwmat.data()[static_cast<long>(o) * ck + j * cin + c];
        }
        if (t.needs_grad(Var{&t, ix})) {
          Tensor dim = Tensor::zeros({B, L, ck});
          num::kern::matmul_acc(g.data(), wmat.data(), dim.mutable_data(),
                                static_cast<int>(BL), cout, ck);
          double* dx = t.grad_buffer(ix).mutable_data();
          const double* pd = dim.data();
          for (int bb = 0; bb < B; ++bb)
            for (int tt = 0; tt < L; ++tt) {
              const double* row = pd + (static_cast<long>(bb) * L + tt) * ck;
              for (int j = 0; j < k; ++j) {
                int src = tt + j - hw;
                if (src < 0 || src >= L) continue;
                double* xr = dx + (static_cast<long>(bb) * L + src) * cin;
                const double* drow = row + static_cast<long>(j) * cin;
                for (int c = 0; c < cin; ++c) xr[c] += drow[c];
              }
            }
        }
      });
  return batched ? y : num::reshape(y, {L, cout});
}

namespace {

// scalar time-importance profile: channel mean of the time-softmaxed gamma
Var time_gate(Var gamma_softmax) {
  const Tensor& g = gamma_softmax.val();
  int d = g.dim(1);
  num::Tape& t = *gamma_softmax.tape;
  Var ones = t.constant(Tensor::full({d, 1}, 1.0 / d));
  return num::reshape(num::matmul(gamma_softmax, ones), {g.dim(0)});
}

}  // namespace

Var fuse_input(Var x, const Tensor& w_r, const FusionParams& fusion,
               Var gamma_bar, FuseVariant variant, Binder& bind) {
  const Tensor& tx = x.val();
  if (tx.rank() != 2) throw std::invalid_argument("fuse_input: x must be [L,d_x]");
  if (w_r.rank() != 2 || w_r.dim(0) != tx.dim(1) || w_r.dim(1) != tx.dim(1))
    throw std::invalid_argument("fuse_input: correlation weight shape mismatch");
  num::Tape& t = bind.tape();
  Var wv = bind(fusion.w_v);
  Var bv = bind(fusion.b_v);
  Var wr = t.constant(w_r);
  Var mixed = num::matmul_nt(x, wr);  // time-major (W_R X)'

  auto conv = [&](Var z) { return conv_time(z, wv, bv); };

  switch (variant) {
    case FuseVariant::Full:
      return num::add(conv(num::add(mixed, x)), gamma_bar);
    case FuseVariant::MinusGamma:
      return conv(num::add(mixed, x));
    case FuseVariant::MinusR:
      return num::add(conv(x), gamma_bar);
    case FuseVariant::MinusRMinusGamma:
      return conv(x);
    case FuseVariant::MinusX:
      return num::add(conv(mixed), gamma_bar);
    case FuseVariant::MinusXMinusGamma:
      return conv(mixed);
    default:
      break;
  }

  // Methods 1-4 fold the calendar term in through a softmax gate over the
  // time axis instead of the additive term. The gate acts per position; in
  // the raw-variable domain it is the channel mean of the gate matrix.
  Var wg = num::softmax(gamma_bar, 0);
  Var gate = time_gate(wg);  // [L]
  switch (variant) {
    case FuseVariant::Method1:
      return conv(num::add(num::rowscale(mixed, gate), x));
    case FuseVariant::Method2:
      return conv(num::add(mixed, num::rowscale(x, gate)));
    case FuseVariant::Method3:
      return conv(num::add(num::add(mixed, num::rowscale(x, gate)), x));
    case FuseVariant::Method4:
      return num::mul(conv(num::add(mixed, x)), wg);
    default:
      throw std::invalid_argument("fuse_input: unknown variant");
  }
}

Var fuse_input_batched(Var x, const std::vector<Tensor>& w_r,
                       const FusionParams& fusion, Var gamma_bar,
                       FuseVariant variant, Binder& bind) {
  const Tensor& tx = x.val();
  if (tx.rank() != 3)
    throw std::invalid_argument("fuse_input_batched: x must be [B,L,d_x]");
  int B = tx.dim(0), L = tx.dim(1), d_x = tx.dim(2);
  if (static_cast<int>(w_r.size()) != B)
    throw std::invalid_argument("fuse_input_batched: need one W_R per sample");
  num::Tape& t = bind.tape();

  bool additive = variant != FuseVariant::Method1 &&
                  variant != FuseVariant::Method2 &&
                  variant != FuseVariant::Method3 &&
                  variant != FuseVariant::Method4;
  if (!additive) {
    // ablation-only path: evaluate per sample through the reference routine
    int d = gamma_bar.val().dim(2);
    std::vector<Var> parts;
    parts.reserve(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      Var xb = num::reshape(num::slice_rows(x, b, b + 1), {L, d_x});
      Var gb = num::reshape(num::slice_rows(gamma_bar, b, b + 1), {L, d});
      Var fb = fuse_input(xb, w_r[static_cast<size_t>(b)], fusion, gb, variant,
                          bind);
      parts.push_back(num::reshape(fb, {1, L, d}));
    }
    return B == 1 ? parts[0] : num::concat_rows(parts);
  }

  Var wv = bind(fusion.w_v);
  Var bv = bind(fusion.b_v);
  bool needs_mix = variant != FuseVariant::MinusR &&
                   variant != FuseVariant::MinusRMinusGamma;
  Var mixed;
  if (needs_mix) {
    std::vector<Var> parts;
    parts.reserve(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      Var xb = num::reshape(num::slice_rows(x, b, b + 1), {L, d_x});
      Var mb = num::matmul_nt(xb, t.constant(w_r[static_cast<size_t>(b)]));
      parts.push_back(num::reshape(mb, {1, L, d_x}));
    }
    mixed = B == 1 ? parts[0] : num::concat_rows(parts);
  }
  auto conv = [&](Var z) { return conv_time(z, wv, bv); };
  switch (variant) {
    case FuseVariant::Full:
      return num::add(conv(num::add(mixed, x)), gamma_bar);
    case FuseVariant::MinusGamma:
      return conv(num::add(mixed, x));
    case FuseVariant::MinusR:
      return num::add(conv(x), gamma_bar);
    case FuseVariant::MinusRMinusGamma:
      return conv(x);
    case FuseVariant::MinusX:
      return num::add(conv(mixed), gamma_bar);
    case FuseVariant::MinusXMinusGamma:
      return conv(mixed);
    default:
      throw std::invalid_argument("fuse_input_batched: unknown variant");
  }
}

}  // namespace conformer::rep
