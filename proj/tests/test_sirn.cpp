#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "conformer/sirn.hpp"
#include "doctest.h"

using namespace conformer;
using namespace conformer::nn;
using num::Binder;
using num::Tape;
using num::Tensor;
using num::Var;

namespace ref {

// independent reference implementation: plain loops, no shared op code

std::vector<std::vector<double>> to_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.dim(0),
                                       std::vector<double>(t.dim(1)));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) out[i][j] = t.at({i, j});
  return out;
}

using Mat = std::vector<std::vector<double>>;

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Mat gru(const Mat& x, const GruParams& p) {
  Mat cur = x;
  for (const auto& w : p.layers) {
    int L = static_cast<int>(cur.size());
    int dh = w.w_hr.dim(0);
    int din = w.w_ir.dim(1);
    Mat out(L, std::vector<double>(dh));
    std::vector<double> h(dh, 0.0);
    for (int t = 0; t < L; ++t) {
      std::vector<double> hn(dh);
      for (int c = 0; c < dh; ++c) {
        double ar = w.b_ir[c] + w.b_hr[c];
        double az = w.b_iz[c] + w.b_hz[c];
        double an = w.b_in[c];
        double ahn = w.b_hn[c];
        for (int i = 0; i < din; ++i) {
          ar += w.w_ir.at({c, i}) * cur[t][i];
          az += w.w_iz.at({c, i}) * cur[t][i];
          an += w.w_in.at({c, i}) * cur[t][i];
        }
        for (int j = 0; j < dh; ++j) {
          ar += w.w_hr.at({c, j}) * h[j];
          az += w.w_hz.at({c, j}) * h[j];
          ahn += w.w_hn.at({c, j}) * h[j];
        }
        double r = sig(ar), z = sig(az);
        double n = std::tanh(an + r * ahn);
        hn[c] = (1 - z) * n + z * h[c];
      }
      h = hn;
      out[t] = h;
    }
    cur = out;
  }
  return cur;
}

Mat softmax_rows(const Mat& x) {
  Mat out = x;
  for (auto& row : out) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return out;
}

Mat window_mha(const Mat& x, const attn::MhaParams& p, int hw) {
  int L = static_cast<int>(x.size());
  int d = static_cast<int>(x[0].size());
  int heads = p.heads, dh = d / heads;
  auto proj = [&](const Tensor& w) {
    Mat out(L, std::vector<double>(d, 0.0));
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) out[i][j] += x[i][k] * w.at({k, j});
    return out;
  };
  Mat q = proj(p.w_q), k = proj(p.w_k), v = proj(p.w_v);
  Mat heads_out(L, std::vector<double>(d, 0.0));
  double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    int c0 = h * dh;
    for (int i = 0; i < L; ++i) {
      int j0 = std::max(0, i - hw), j1 = std::min(L - 1, i + hw);
      std::vector<double> logits;
      for (int j = j0; j <= j1; ++j) {
        double acc = 0;
        for (int c = 0; c < dh; ++c) acc += q[i][c0 + c] * k[j][c0 + c];
        logits.push_back(acc * inv);
      }
      double mx = logits[0];
      for (double lv : logits) mx = std::max(mx, lv);
      double z = 0;
      for (double& lv : logits) {
        lv = std::exp(lv - mx);
        z += lv;
      }
      for (int j = j0; j <= j1; ++j)
        for (int c = 0; c < dh; ++c)
          heads_out[i][c0 + c] += logits[j - j0] / z * v[j][c0 + c];
    }
  }
  Mat out(L, std::vector<double>(d, 0.0));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j)
      for (int c = 0; c < d; ++c) out[i][j] += heads_out[i][c] * p.w_o.at({c, j});
  return out;
}

std::pair<Mat, Mat> decomp(const Mat& x, int kernel) {
  int L = static_cast<int>(x.size());
  int d = static_cast<int>(x[0].size());
  int hw = (kernel - 1) / 2;
  Mat trend(L, std::vector<double>(d, 0.0)), season = trend;
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < d; ++c) {
      double acc = 0;
      for (int j = -hw; j <= hw; ++j)
        acc += x[std::clamp(t + j, 0, L - 1)][c];
      trend[t][c] = acc / kernel;
      season[t][c] = x[t][c] - trend[t][c];
    }
  return {trend, season};
}

Mat conv3(const Mat& x, const Tensor& w, const Tensor& b) {
  int L = static_cast<int>(x.size());
  int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  int hw = (k - 1) / 2;
  Mat out(L, std::vector<double>(cout));
  for (int t = 0; t < L; ++t)
    for (int o = 0; o < cout; ++o) {
      double acc = b[o];
      for (int j = 0; j < k; ++j) {
        int src = t + j - hw;
        if (src < 0 || src >= L) continue;
        for (int c = 0; c < cin; ++c) acc += w.at({o, c, j}) * x[src][c];
      }
      out[t][o] = acc;
    }
  return out;
}

Mat sirn(const Mat& x, const SirnLayerParams& p) {
  int L = static_cast<int>(x.size());
  int d = static_cast<int>(x[0].size());
  Mat g = softmax_rows(gru(x, p.rnn1));
  Mat local = window_mha(x, p.mha, p.band.half());
  Mat x1(L, std::vector<double>(d));
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < d; ++c)
      x1[t][c] = g[t][c] * x[t][c] + local[t][c] + x[t][c];
  auto [trend, season] = decomp(x1, p.decomp_kernel);
  Mat trend_sum = trend;
  Mat a = window_mha(x1, p.mha, p.band.half());
  for (int l = 1; l <= p.eta; ++l) {
    Mat emb = conv3(season, p.season_w[l - 1], p.season_b[l - 1]);
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) emb[t][c] += a[t][c];
    auto [tl, sl] = decomp(emb, p.decomp_kernel);
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) trend_sum[t][c] += tl[t][c];
    season = sl;
  }
  Mat r2 = gru(trend_sum, p.rnn2);
  Mat out(L, std::vector<double>(d, 0.0));
  for (int t = 0; t < L; ++t)
    for (int o = 0; o < d; ++o)
      for (int c = 0; c < d; ++c)
        out[t][o] += (season[t][c] + r2[t][c]) * p.w_out.at({o, c});
  return out;
}

}  // namespace ref

TEST_CASE("decomposition identities") {
  num::Rng rng(3);
  Tensor c = Tensor::full({6, 2}, 4.2);
  Tape tape;
  Binder bind(tape);
  Decomposed dc = series_decompose(bind.input(c), 3);
  for (int64_t i = 0; i < c.numel(); ++i) {
    CHECK(dc.seasonal.val()[i] == 0.0);
    CHECK(dc.trend.val()[i] == doctest::Approx(4.2));
  }

  Tensor x = rng.normal_tensor({20, 3});
  Decomposed dx = series_decompose(bind.input(x), 7);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(std::abs(dx.trend.val()[i] + dx.seasonal.val()[i] - x[i]) <= 1e-14);

  // fast sinusoid under a long kernel leaves only a small trend
  int L = 96;
  Tensor s = Tensor::zeros({L, 1});
  for (int t = 0; t < L; ++t)
    s.mutable_data()[t] = std::sin(2 * 3.14159265358979 * t / 5.0);
  Decomposed ds = series_decompose(bind.input(s), 25);
  for (int t = 12; t < L - 12; ++t)
    CHECK(std::abs(ds.trend.val()[t]) <= 0.1);
}

TEST_CASE("shape contract and distillation count") {
  num::Rng rng(7);
  SirnLayerParams p = SirnLayerParams::init(16, 4, 2, 2, 25, 1, rng);
  Tensor x = rng.normal_tensor({24, 16});
  Tape tape;
  Binder bind(tape);
  int64_t before = decompose_count();
  SirnOut out = sirn_layer_forward(bind.input(x), p, bind);
  CHECK(decompose_count() - before == 3);  // eta + 1
  CHECK(out.x_out.val().dim(0) == 24);
  CHECK(out.x_out.val().dim(1) == 16);
  CHECK(out.flow_state.val().dim(0) == 24);
  CHECK(out.flow_state.val().dim(1) == 16);

  for (int eta : {1, 3}) {
    SirnLayerParams pe = SirnLayerParams::init(8, 2, 2, eta, 5, 1, rng);
    Tensor xe = rng.normal_tensor({12, 8});
    int64_t b2 = decompose_count();
    sirn_layer_forward(bind.input(xe), pe, bind);
    CHECK(decompose_count() - b2 == eta + 1);
  }
}

TEST_CASE("formula collapses under forced identity pieces") {
  num::Rng rng(11);
  int L = 16, d = 4;
  SirnLayerParams p = SirnLayerParams::init(d, 2, 2, 1, 5, 1, rng);
  // silence attention and the trend rnn; identity output projection
  p.mha.w_o = Tensor::zeros({d, d});
  for (auto& w : p.rnn2.layers)
    for (Tensor* t : {&w.w_ir, &w.w_iz, &w.w_in, &w.w_hr, &w.w_hz, &w.w_hn,
                      &w.b_ir, &w.b_iz, &w.b_in, &w.b_hr, &w.b_hz, &w.b_hn})
      *t = Tensor::zeros(t->shape());
  p.w_out = Tensor::zeros({d, d});
  for (int i = 0; i < d; ++i) p.w_out.mutable_data()[i * d + i] = 1.0;

  Tensor x = rng.normal_tensor({L, d});

  SUBCASE("delta seasonal kernel: output is the doubly-decomposed seasonal") {
    p.season_w[0] = Tensor::zeros({d, d, 3});
    for (int c = 0; c < d; ++c)
      p.season_w[0].mutable_data()[(c * d + c) * 3 + 1] = 1.0;
    Tape tape;
    Binder bind(tape);
    SirnOut out = sirn_layer_forward(bind.input(x), p, bind);
    // reference: x1 = softmax(rnn1(x)) .* x + x, then seasonal of seasonal
    auto xm = ref::to_rows(x);
    auto g = ref::softmax_rows(ref::gru(xm, p.rnn1));
    ref::Mat x1(L, std::vector<double>(d));
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) x1[t][c] = g[t][c] * xm[t][c] + xm[t][c];
    auto s0 = ref::decomp(x1, p.decomp_kernel).second;
    auto s1 = ref::decomp(s0, p.decomp_kernel).second;
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c)
        CHECK(out.x_out.val().at({t, c}) ==
              doctest::Approx(s1[t][c]).epsilon(1e-10));
  }

  SUBCASE("zero seasonal kernel: the collapse drives the output to zero") {
    p.season_w[0] = Tensor::zeros({d, d, 3});
    Tape tape;
    Binder bind(tape);
    SirnOut out = sirn_layer_forward(bind.input(x), p, bind);
    for (int64_t i = 0; i < out.x_out.val().numel(); ++i)
      CHECK(std::abs(out.x_out.val()[i]) <= 1e-14);
  }
}

TEST_CASE("full random layer matches the independent unrolled reference") {
  num::Rng rng(13);
  for (int gru_layers : {1, 2}) {
    SirnLayerParams p = SirnLayerParams::init(6, 2, 2, 2, 7, gru_layers, rng);
    Tensor x = rng.normal_tensor({18, 6});
    Tape tape;
    Binder bind(tape);
    SirnOut out = sirn_layer_forward(bind.input(x), p, bind);
    auto want = ref::sirn(ref::to_rows(x), p);
    double worst = 0;
    for (int t = 0; t < 18; ++t)
      for (int c = 0; c < 6; ++c)
        worst = std::max(worst,
                         std::abs(out.x_out.val().at({t, c}) - want[t][c]));
    CHECK(worst <= 1e-10);

    // flow state is rnn1 applied to the layer input
    auto h1 = ref::gru(ref::to_rows(x), p.rnn1);
    for (int t = 0; t < 18; ++t)
      for (int c = 0; c < 6; ++c)
        CHECK(out.flow_state.val().at({t, c}) ==
              doctest::Approx(h1[t][c]).epsilon(1e-10));
  }
}

TEST_CASE("gradients flow through a one-layer block") {
  num::Rng rng(17);
  SirnLayerParams p = SirnLayerParams::init(4, 2, 2, 1, 3, 1, rng);
  Tensor x = rng.normal_tensor({8, 4});
  auto loss = [&](Tape&, Binder& bind) {
    SirnOut out = sirn_layer_forward(bind(x), p, bind);
    return num::sum(num::mul(out.x_out, out.x_out));
  };
  double err = num::grad_check(
      loss, {&x, &p.w_out, &p.season_w[0], &p.season_b[0], &p.mha.w_q,
             &p.mha.w_o, &p.rnn1.layers[0].w_ir, &p.rnn1.layers[0].w_hn,
             &p.rnn2.layers[0].w_in, &p.rnn2.layers[0].b_iz});
  CHECK(err <= 1e-4);
}

TEST_CASE("batched layer equals per-sample evaluation") {
  num::Rng rng(19);
  SirnLayerParams p = SirnLayerParams::init(4, 2, 2, 2, 5, 1, rng);
  Tensor xb = rng.normal_tensor({3, 10, 4});
  Tape tape;
  Binder bind(tape);
  SirnOut batched = sirn_layer_forward(bind.input(xb), p, bind);
  for (int b = 0; b < 3; ++b) {
    Tensor xs = Tensor::zeros({10, 4});
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 4; ++c)
        xs.mutable_data()[t * 4 + c] = xb.at({b, t, c});
    SirnOut single = sirn_layer_forward(bind.input(xs), p, bind);
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 4; ++c)
        CHECK(single.x_out.val().at({t, c}) ==
              doctest::Approx(batched.x_out.val().at({b, t, c}))
                  .epsilon(1e-12));
  }
}
