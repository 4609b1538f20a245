#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "conformer/inputrep.hpp"
#include "doctest.h"

using namespace conformer;
using namespace conformer::rep;
using num::Binder;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

// O(L^2) direct circular cross-correlation of mean-removed columns
std::vector<double> xcorr_direct(const Tensor& x, int i, int j) {
  int L = x.dim(0);
  std::vector<double> a(L), b(L);
  double ma = 0, mb = 0;
  for (int t = 0; t < L; ++t) {
    ma += x.at({t, i});
    mb += x.at({t, j});
  }
  ma /= L;
  mb /= L;
  for (int t = 0; t < L; ++t) {
    a[t] = x.at({t, i}) - ma;
    b[t] = x.at({t, j}) - mb;
  }
  std::vector<double> r(L, 0.0);
  for (int tau = 0; tau < L; ++tau) {
    double acc = 0;
    for (int t = 0; t < L; ++t) acc += a[t] * b[(t + tau) % L];
    r[tau] = acc / L;
  }
  return r;
}

}  // namespace

TEST_CASE("identical variables give symmetric MR and a 50/50 softmax row") {
  num::Rng rng(3);
  int L = 32;
  Tensor x = Tensor::zeros({L, 2});
  for (int t = 0; t < L; ++t) {
    double v = rng.normal();
    x.mutable_data()[t * 2] = v;
    x.mutable_data()[t * 2 + 1] = v;
  }
  Tensor mr = correlation_matrix(x);
  CHECK(mr.at({0, 1}) == doctest::Approx(mr.at({0, 0})).epsilon(1e-10));
  CHECK(mr.at({1, 0}) == doctest::Approx(mr.at({0, 1})).epsilon(1e-10));
  CorrelationWeights w = multivariate_correlation(x);
  CHECK(w.w_r.at({0, 0}) == doctest::Approx(0.5));
  CHECK(w.w_r.at({0, 1}) == doctest::Approx(0.5));
}

TEST_CASE("fft cross-correlation matches the direct oracle; shifted pair peaks at the lag") {
  num::Rng rng(11);
  int L = 48;
  Tensor x = Tensor::zeros({L, 2});
  std::vector<double> base(L);
  for (auto& v : base) v = rng.normal();
  for (int t = 0; t < L; ++t) {
    x.mutable_data()[t * 2] = base[t];
    x.mutable_data()[t * 2 + 1] = base[(t - 3 + L) % L];  // j lags i by 3
  }
  auto fft_prof = cross_correlation(x, 0, 1);
  auto direct = xcorr_direct(x, 0, 1);
  for (int tau = 0; tau < L; ++tau)
    CHECK(fft_prof[tau] == doctest::Approx(direct[tau]).epsilon(1e-10));
  int argmax = 0;
  for (int tau = 1; tau < L; ++tau)
    if (fft_prof[tau] > fft_prof[argmax]) argmax = tau;
  CHECK(argmax == 3);
  Tensor mr = correlation_matrix(x);
  CHECK(mr.at({0, 1}) == doctest::Approx(mr.at({0, 0})).epsilon(1e-10));
}

TEST_CASE("independent white noise has small off-diagonal MR") {
  num::Rng rng(17);
  int L = 512;
  Tensor x = rng.normal_tensor({L, 2});
  Tensor mr = correlation_matrix(x);
  CHECK(mr.at({0, 1}) < 0.35 * mr.at({0, 0}));
  CHECK(mr.at({1, 0}) < 0.35 * mr.at({1, 1}));
}

TEST_CASE("MR permutation equivariance and softmax row sums") {
  num::Rng rng(23);
  int L = 40, d = 4;
  Tensor x = rng.normal_tensor({L, d});
  Tensor mr = correlation_matrix(x);
  // permute variables: reversal
  Tensor xp = Tensor::zeros({L, d});
  for (int t = 0; t < L; ++t)
    for (int j = 0; j < d; ++j)
      xp.mutable_data()[t * d + (d - 1 - j)] = x.at({t, j});
  Tensor mrp = correlation_matrix(xp);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(mrp.at({d - 1 - i, d - 1 - j}) ==
            doctest::Approx(mr.at({i, j})).epsilon(1e-10));

  Tensor wr = multivariate_correlation(x).w_r;
  for (int i = 0; i < d; ++i) {
    double z = 0;
    for (int j = 0; j < d; ++j) {
      z += wr.at({i, j});
      CHECK(wr.at({i, j}) > 0.0);
      CHECK(wr.at({i, j}) < 1.0);
    }
    CHECK(std::abs(z - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(correlation_matrix(Tensor::zeros({1, 2})),
                  std::invalid_argument);
}

TEST_CASE("multiscale embedding reductions and loop oracle") {
  num::Rng rng(7);
  int L = 8, d = 3;
  auto scales = std::vector<int>{1, 2};  // hour, weekday
  MultiscaleEmbed e = MultiscaleEmbed::init(scales, L, d, rng);
  Tensor marks = Tensor::zeros({L, 5});
  for (int t = 0; t < L; ++t) {
    marks.mutable_data()[t * 5 + 1] = (t * 5) % 24;
    marks.mutable_data()[t * 5 + 2] = t % 7;
  }

  // all tables zero -> output equals the bias
  MultiscaleEmbed zeroed = e;
  for (auto& tbl : zeroed.tables) tbl = Tensor::zeros(tbl.shape());
  num::Rng rb(9);
  zeroed.bias = rb.normal_tensor({L, d});
  {
    Tape tape;
    Binder bind(tape);
    Var out = multiscale_embedding(marks, zeroed, bind);
    for (int64_t i = 0; i < out.val().numel(); ++i)
      CHECK(out.val()[i] == doctest::Approx(zeroed.bias[i]));
  }

  // single scale, identity mixing, zero bias -> plain lookup
  MultiscaleEmbed single = MultiscaleEmbed::init({1}, L, d, rng);
  single.mix[0] = Tensor::zeros({L, L});
  for (int t = 0; t < L; ++t) single.mix[0].mutable_data()[t * L + t] = 1.0;
  single.bias = Tensor::zeros({L, d});
  {
    Tape tape;
    Binder bind(tape);
    Var out = multiscale_embedding(marks, single, bind);
    for (int t = 0; t < L; ++t) {
      int code = static_cast<int>(marks.at({t, 1}));
      for (int c = 0; c < d; ++c)
        CHECK(out.val().at({t, c}) ==
              doctest::Approx(single.tables[0].at({code, c})));
    }
  }

  // explicit two-scale loop oracle
  {
    Tape tape;
    Binder bind(tape);
    Var out = multiscale_embedding(marks, e, bind);
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) {
        double acc = e.bias.at({t, c});
        for (size_t k = 0; k < e.scales.size(); ++k) {
          for (int u = 0; u < L; ++u) {
            int code = static_cast<int>(marks.at({u, e.scales[k]}));
            acc += e.mix[k].at({t, u}) * e.tables[k].at({code, c});
          }
        }
        CHECK(out.val().at({t, c}) == doctest::Approx(acc).epsilon(1e-12));
      }
  }

  // window length mismatch is rejected
  Tensor short_marks = Tensor::zeros({L - 1, 5});
  Tape tape;
  Binder bind(tape);
  CHECK_THROWS_AS(multiscale_embedding(short_marks, e, bind),
                  std::invalid_argument);
}

TEST_CASE("conv_time agrees with the channels-major conv1d") {
  num::Rng rng(13);
  int L = 10, cin = 3, cout = 4;
  Tensor x_tm = rng.normal_tensor({L, cin});
  Tensor w = rng.normal_tensor({cout, cin, 3});
  Tensor b = rng.normal_tensor({cout});
  Tape tape;
  Binder bind(tape);
  Var y_tm = conv_time(bind.input(x_tm), bind.input(w), bind.input(b));
  // transpose input, run the rank-2 op, compare transposed
  Tensor x_cm = Tensor::zeros({cin, L});
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < cin; ++c)
      x_cm.mutable_data()[c * L + t] = x_tm.at({t, c});
  Var y_cm = num::conv1d(bind.input(x_cm), bind.input(w), bind.input(b));
  for (int t = 0; t < L; ++t)
    for (int o = 0; o < cout; ++o)
      CHECK(y_tm.val().at({t, o}) ==
            doctest::Approx(y_cm.val().at({o, t})).epsilon(1e-12));
}

namespace {
FusionParams delta_kernel(int d) {
  FusionParams f;
  f.w_v = Tensor::zeros({d, d, 3});
  for (int c = 0; c < d; ++c) f.w_v.mutable_data()[(c * d + c) * 3 + 1] = 1.0;
  f.b_v = Tensor::zeros({d});
  return f;
}
}  // namespace

TEST_CASE("fuse_input reduces to 2x under identity pieces") {
  num::Rng rng(5);
  int L = 6, d = 3;
  Tensor x = rng.normal_tensor({L, d});
  Tensor w_r = Tensor::zeros({d, d});
  for (int i = 0; i < d; ++i) w_r.mutable_data()[i * d + i] = 1.0;
  FusionParams f = delta_kernel(d);
  Tape tape;
  Binder bind(tape);
  Var gamma = bind.input(Tensor::zeros({L, d}));
  Var out = fuse_input(bind.input(x), w_r, f, gamma, FuseVariant::Full, bind);
  for (int64_t i = 0; i < out.val().numel(); ++i)
    CHECK(out.val()[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-12));
}

TEST_CASE("minus-r-minus-gamma with a k=1 kernel is a pure channel map") {
  num::Rng rng(19);
  int L = 5, d_x = 2, d = 3;
  Tensor x = rng.normal_tensor({L, d_x});
  FusionParams f;
  f.w_v = rng.normal_tensor({d, d_x, 1});
  f.b_v = rng.normal_tensor({d});
  Tensor w_r = Tensor::zeros({d_x, d_x});
  Tape tape;
  Binder bind(tape);
  Var gamma = bind.input(Tensor::zeros({L, d}));
  Var out = fuse_input(bind.input(x), w_r, f, gamma,
                       FuseVariant::MinusRMinusGamma, bind);
  for (int t = 0; t < L; ++t)
    for (int o = 0; o < d; ++o) {
      double acc = f.b_v[o];
      for (int c = 0; c < d_x; ++c) acc += f.w_v.at({o, c, 0}) * x.at({t, c});
      CHECK(out.val().at({t, o}) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("method 2 equals its explicit expansion on a 2x4 toy input") {
  num::Rng rng(29);
  int L = 4, d_x = 2, d = 2;
  Tensor x = rng.normal_tensor({L, d_x});
  Tensor w_r = num::softmax_tensor(rng.normal_tensor({d_x, d_x}), 1);
  Tensor gamma = rng.normal_tensor({L, d});
  FusionParams f;
  f.w_v = rng.normal_tensor({d, d_x, 3});
  f.b_v = rng.normal_tensor({d});

  Tape tape;
  Binder bind(tape);
  Var out = fuse_input(bind.input(x), w_r, f, bind.input(gamma),
                       FuseVariant::Method2, bind);

  // hand expansion: conv(W_R X + gate .* X) with the channel-mean time gate
  Tensor wg = num::softmax_tensor(gamma, 0);
  std::vector<double> gate(L, 0.0);
  for (int t = 0; t < L; ++t) {
    for (int c = 0; c < d; ++c) gate[t] += wg.at({t, c});
    gate[t] /= d;
  }
  for (int t = 0; t < L; ++t)
    for (int o = 0; o < d; ++o) {
      double acc = f.b_v[o];
      for (int j = 0; j < 3; ++j) {
        int src = t + j - 1;
        if (src < 0 || src >= L) continue;
        for (int c = 0; c < d_x; ++c) {
          double mixed = 0;
          for (int u = 0; u < d_x; ++u) mixed += w_r.at({c, u}) * x.at({src, u});
          double inv = mixed + gate[src] * x.at({src, c});
          acc += f.w_v.at({o, c, j}) * inv;
        }
      }
      CHECK(out.val().at({t, o}) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("all ten fusion variants are pairwise distinct on random inputs") {
  num::Rng rng(31);
  int L = 12, d_x = 3, d = 4;
  Tensor x = rng.normal_tensor({L, d_x});
  Tensor w_r = num::softmax_tensor(rng.normal_tensor({d_x, d_x}), 1);
  Tensor gamma = rng.normal_tensor({L, d});
  FusionParams f = FusionParams::init(d, d_x, 3, rng);

  std::vector<Tensor> outs;
  for (FuseVariant v : all_fuse_variants()) {
    Tape tape;
    Binder bind(tape);
    Var out = fuse_input(bind.input(x), w_r, f, bind.input(gamma), v, bind);
    outs.push_back(out.val().clone());
  }
  for (size_t a = 0; a < outs.size(); ++a)
    for (size_t b = a + 1; b < outs.size(); ++b) {
      double diff = 0;
      for (int64_t i = 0; i < outs[a].numel(); ++i)
        diff = std::max(diff, std::abs(outs[a][i] - outs[b][i]));
      INFO(to_string(all_fuse_variants()[a]), " vs ",
           to_string(all_fuse_variants()[b]));
      CHECK(diff > 1e-8);
    }
}

TEST_CASE("every fusion variant is differentiable through its parameters") {
  num::Rng rng(37);
  int L = 6, d_x = 2, d = 3;
  Tensor x = rng.normal_tensor({L, d_x});
  Tensor w_r = num::softmax_tensor(rng.normal_tensor({d_x, d_x}), 1);
  FusionParams f = FusionParams::init(d, d_x, 3, rng);
  MultiscaleEmbed e = MultiscaleEmbed::init({1, 2}, L, d, rng);
  Tensor marks = Tensor::zeros({L, 5});
  for (int t = 0; t < L; ++t) {
    marks.mutable_data()[t * 5 + 1] = t % 24;
    marks.mutable_data()[t * 5 + 2] = t % 7;
  }
  for (FuseVariant v : all_fuse_variants()) {
    auto loss = [&](num::Tape&, Binder& bind) {
      Var gamma = multiscale_embedding(marks, e, bind);
      Var out = fuse_input(bind.input(x), w_r, f, gamma, v, bind);
      return num::sum(num::mul(out, out));
    };
    double err = num::grad_check(
        loss, {&f.w_v, &f.b_v, &e.tables[0], &e.tables[1], &e.mix[0],
               &e.mix[1], &e.bias});
    INFO(to_string(v));
    CHECK(err <= 1e-4);
  }
}
