#include "conformer/sirn.hpp"

#include <atomic>
#include <cmath>

#include "conformer/inputrep.hpp"

namespace conformer::nn {

using num::Binder;
using num::Tensor;
using num::Var;

namespace {
std::atomic<int64_t> g_decomp_count{0};

Var as_batched(Var x, bool& was2d) {
  const Tensor& t = x.val();
  was2d = t.rank() == 2;
  return was2d ? num::reshape(x, {1, t.dim(0), t.dim(1)}) : x;
}

Var like_input(Var x3, bool was2d) {
  const Tensor& t = x3.val();
  return was2d ? num::reshape(x3, {t.dim(1), t.dim(2)}) : x3;
}
}  // namespace

int64_t decompose_count() { return g_decomp_count.load(); }

Decomposed series_decompose(num::Var x, int kernel) {
  bool was2d;
  Var x3 = as_batched(x, was2d);
  Var trend = num::avgpool_time(x3, kernel);
  Var seasonal = num::sub(x3, trend);
  g_decomp_count.fetch_add(1);
  return Decomposed{like_input(trend, was2d), like_input(seasonal, was2d)};
}

SirnLayerParams SirnLayerParams::init(int d, int heads, int band_w, int eta,
                                      int decomp_kernel, int gru_layers,
                                      num::Rng& rng) {
  if (eta < 1) throw std::invalid_argument("SirnLayerParams: eta must be >= 1");
  SirnLayerParams p;
  p.rnn1 = GruParams::init(d, d, gru_layers, rng);
  p.rnn2 = GruParams::init(d, d, gru_layers, rng);
  p.mha = attn::MhaParams::init(d, heads, rng);
  p.band = attn::BandMask(band_w);
  double a = std::sqrt(6.0 / (d * 3 + d * 3));
  for (int l = 0; l < eta; ++l) {
    p.season_w.push_back(rng.uniform_tensor({d, d, 3}, -a, a));
    p.season_b.push_back(Tensor::zeros({d}));
  }
  p.w_out = rng.uniform_tensor({d, d}, -a, a);
  p.decomp_kernel = decomp_kernel;
  p.eta = eta;
  return p;
}

namespace {

Var batched_window_mha(Var x3, const attn::MhaParams& p,
                       const attn::BandMask& band, Binder& bind) {
  return attn::fused_mha(x3, x3, p, band.half(), bind);
}

Var feature_softmax(Var x3) {
  const Tensor& t = x3.val();
  int B = t.dim(0), L = t.dim(1), d = t.dim(2);
  Var flat = num::reshape(x3, {B * L, d});
  return num::reshape(num::softmax(flat, 1), {B, L, d});
}

}  // namespace

SirnOut sirn_layer_forward(Var x_in, const SirnLayerParams& p, Binder& bind) {
  bool was2d;
  Var x3 = as_batched(x_in, was2d);
  const Tensor& t = x3.val();
  int B = t.dim(0), L = t.dim(1), d = t.dim(2);

  // global gate + local attention + residual
  GruOut g1 = gru_forward(x3, p.rnn1, bind);
  Var gate = feature_softmax(g1.outputs);
  Var local = batched_window_mha(x3, p.mha, p.band, bind);
  Var x1 = num::add(num::add(num::mul(gate, x3), local), x3);

  // recurrent trend/seasonal distillation
  Decomposed d0 = series_decompose(x1, p.decomp_kernel);
  Var trend_sum = d0.trend;
  Var seasonal = d0.seasonal;
  Var local1 = batched_window_mha(x1, p.mha, p.band, bind);
  for (int l = 1; l <= p.eta; ++l) {
    Var emb = rep::conv_time(seasonal, bind(p.season_w[static_cast<size_t>(l - 1)]),
                             bind(p.season_b[static_cast<size_t>(l - 1)]));
    Decomposed dl = series_decompose(num::add(emb, local1), p.decomp_kernel);
    trend_sum = num::add(trend_sum, dl.trend);
    seasonal = dl.seasonal;
  }

  GruOut g2 = gru_forward(trend_sum, p.rnn2, bind);
  Var fused = num::add(seasonal, g2.outputs);
  Var out = num::reshape(
      num::matmul_nt(num::reshape(fused, {B * L, d}), bind(p.w_out)),
      {B, L, d});

  return SirnOut{like_input(out, was2d), like_input(g1.states, was2d)};
}

}  // namespace conformer::nn
