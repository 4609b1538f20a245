// Acceptance suite: one line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "conformer/bench.hpp"
#include "conformer/checkpoint.hpp"
#include "conformer/train.hpp"

using namespace conformer;
using model::BatchVars;
using model::ConformerParams;
using model::ModelConfig;
using num::Binder;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", idx, name,
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void run_criterion(int idx, const char* name,
                   const std::function<bool(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(idx, name, ok, detail);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.band_w = 2;
  cfg.eta = 1;
  cfg.decomp_kernel = 5;
  cfg.flow_T = 1;
  cfg.L_x = 8;
  cfg.L_y = 4;
  cfg.L_tok = 4;
  cfg.batch = 4;
  cfg.seed = 3;
  return cfg;
}

std::vector<data::WindowSample> tiny_batch(const ModelConfig& cfg, int n,
                                           uint64_t seed) {
  data::SynthSpec spec;
  spec.L = cfg.L_x + cfg.L_y + n + 2;
  spec.d_x = 2;
  spec.seed = seed;
  spec.periods = {24, 12};
  spec.noise_std = 0.3;
  data::SeriesFrame raw = data::synth_generate(spec);
  data::StandardizeStats st = data::fit_stats(raw, 0, raw.length());
  data::SeriesFrame f = data::standardize(raw, st);
  std::vector<data::WindowSample> out;
  for (int s = 0; s < n; ++s)
    out.push_back(data::make_window(f, cfg.window_spec(), s));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// ---- criterion 1 ----
bool attention_oracle(std::string& detail) {
  num::Rng rng(101);
  int cases = 0;
  double worst = 0;
  while (cases < 100) {
    int L = std::vector<int>{8, 32, 128}[rng.below(3)];
    int w = std::vector<int>{2, 4, 8}[rng.below(3)];
    int N = std::vector<int>{1, 4}[rng.below(2)];
    int d = 16;
    attn::MhaParams p = attn::MhaParams::init(d, N, rng);
    Tensor x = rng.normal_tensor({L, d});
    Tape tape(false);
    Binder bind(tape);
    attn::BandMask m(w);
    Var dense = attn::sliding_window_mha(tape.constant(x), p, m, bind);
    Var fast = attn::banded_mha_fast(tape.constant(x), p, m, bind);
    worst = std::max(worst, max_abs_diff(dense.val(), fast.val()));
    ++cases;
  }
  if (worst > 1e-10) {
    detail = "banded vs dense worst diff " + std::to_string(worst);
    return false;
  }
  // wide window reproduces unmasked attention bitwise
  for (int L : {8, 32}) {
    int d = 16;
    attn::MhaParams p = attn::MhaParams::init(d, 4, rng);
    Tensor x = rng.normal_tensor({L, d});
    Tape tape(false);
    Binder bind(tape);
    Var wide = attn::sliding_window_mha(tape.constant(x), p,
                                        attn::BandMask(2 * (L - 1)), bind);
    Var full = attn::full_mha(tape.constant(x), p, bind);
    for (int64_t i = 0; i < wide.val().numel(); ++i)
      if (wide.val()[i] != full.val()[i]) {
        detail = "wide band is not bitwise-equal to full attention";
        return false;
      }
  }
  detail = "100 cases, worst diff " + std::to_string(worst);
  return true;
}

// ---- criterion 2 ----
bool complexity_scaling(std::string& detail) {
  bench::BenchConfig cfg;
  cfg.lengths = {512, 1024, 2048, 4096};
  cfg.trials = 20;
  cfg.warmup = 10;
  cfg.band_w = 32;
  cfg.d = 64;
  cfg.heads = 4;
  auto rows = bench::bench_attention(cfg);
  auto time_of = [&](int L, const char* variant) {
    for (const auto& r : rows)
      if (r.L == L && r.variant == variant) return r.mean_ms;
    throw std::runtime_error("bench row missing");
  };
  char buf[256];
  std::string why;
  bool ok = true;
  for (size_t i = 0; i + 1 < cfg.lengths.size(); ++i) {
    int L = cfg.lengths[i], L2 = cfg.lengths[i + 1];
    double rb = time_of(L2, "banded") / time_of(L, "banded");
    double rd = time_of(L2, "dense") / time_of(L, "dense");
    std::snprintf(buf, sizeof(buf), "%d->%d banded %.2f dense %.2f; ", L, L2,
                  rb, rd);
    why += buf;
    if (rb > 2.5 || rd < 3.0) ok = false;
  }
  bench::write_bench_csv(rows, "acceptance_bench.csv");
  detail = why;
  return ok;
}

// ---- criterion 3 ----
bool decomposition_identity(std::string& detail) {
  num::Rng rng(103);
  double worst = 0;
  for (int eta : {1, 2, 3}) {
    nn::SirnLayerParams p = nn::SirnLayerParams::init(6, 2, 2, eta, 7, 1, rng);
    Tensor x = rng.normal_tensor({20, 6});
    // re-run the layer's distillation explicitly, checking the identity at
    // every step via series_decompose
    Tape tape(false);
    Binder bind(tape);
    Var cur = bind.input(x);
    for (int l = 0; l <= eta; ++l) {
      nn::Decomposed dc = nn::series_decompose(cur, p.decomp_kernel);
      Tensor sum = Tensor::zeros(x.shape());
      for (int64_t i = 0; i < sum.numel(); ++i)
        sum.mutable_data()[i] = dc.trend.val()[i] + dc.seasonal.val()[i];
      worst = std::max(worst, max_abs_diff(sum, cur.val()));
      cur = dc.seasonal;
    }
  }
  // constant input: exactly zero seasonal
  Tape tape(false);
  Binder bind(tape);
  nn::Decomposed dc =
      nn::series_decompose(bind.input(Tensor::full({12, 3}, 2.5)), 5);
  for (int64_t i = 0; i < dc.seasonal.val().numel(); ++i)
    if (dc.seasonal.val()[i] != 0.0) {
      detail = "constant input produced nonzero seasonal";
      return false;
    }
  detail = "worst reconstruction error " + std::to_string(worst);
  return worst <= 1e-14;
}

// ---- criterion 4 ----
bool gradient_integrity(std::string& detail) {
  num::Rng rng(104);
  double worst = 0;
  auto track = [&](const char* what, double err) {
    worst = std::max(worst, err);
    if (err > 1e-4) detail += std::string(what) + " err " + std::to_string(err) + "; ";
  };

  {  // (a) numcore ops
    Tensor a = rng.normal_tensor({3, 4});
    Tensor b = rng.normal_tensor({4, 2});
    Tensor k = rng.uniform_tensor({2, 3, 3}, -0.5, 0.5);
    Tensor bias = rng.normal_tensor({2});
    track("matmul", num::grad_check(
                        [&](Tape&, Binder& bd) {
                          return num::sum(num::matmul(bd(a), bd(b)));
                        },
                        {&a, &b}));
    track("softmax", num::grad_check(
                         [&](Tape&, Binder& bd) {
                           Var p = num::softmax(bd(a), 1);
                           return num::sum(num::mul(p, p));
                         },
                         {&a}));
    track("conv1d", num::grad_check(
                        [&](Tape&, Binder& bd) {
                          Var y = num::conv1d(bd(a), bd(k), bd(bias));
                          return num::sum(num::mul(y, y));
                        },
                        {&a, &k, &bias}));
    track("avgpool", num::grad_check(
                         [&](Tape&, Binder& bd) {
                           Var y = num::avgpool1d_replicate(bd(a), 3);
                           return num::sum(num::mul(y, y));
                         },
                         {&a}));
    for (num::Act act : {num::Act::Sigmoid, num::Act::Tanh, num::Act::Softplus,
                         num::Act::Gelu})
      track("activation", num::grad_check(
                              [&](Tape&, Binder& bd) {
                                Var y = num::activation(bd(a), act);
                                return num::sum(num::mul(y, y));
                              },
                              {&a}));
  }
  {  // (b) fusion variants
    int L = 6, d_x = 2, d = 3;
    Tensor x = rng.normal_tensor({L, d_x});
    Tensor w_r = num::softmax_tensor(rng.normal_tensor({d_x, d_x}), 1);
    Tensor gamma = rng.normal_tensor({L, d});
    rep::FusionParams f = rep::FusionParams::init(d, d_x, 3, rng);
    for (rep::FuseVariant v : rep::all_fuse_variants())
      track(rep::to_string(v).c_str(),
            num::grad_check(
                [&](Tape&, Binder& bd) {
                  Var out = rep::fuse_input(bd.input(x), w_r, f, bd(gamma), v, bd);
                  return num::sum(num::mul(out, out));
                },
                {&gamma, &f.w_v, &f.b_v}));
  }
  {  // (c) one SIRN layer
    nn::SirnLayerParams p = nn::SirnLayerParams::init(4, 2, 2, 1, 3, 1, rng);
    Tensor x = rng.normal_tensor({8, 4});
    track("sirn", num::grad_check(
                      [&](Tape&, Binder& bd) {
                        nn::SirnOut o = nn::sirn_layer_forward(bd(x), p, bd);
                        return num::sum(num::mul(o.x_out, o.x_out));
                      },
                      {&x, &p.w_out, &p.season_w[0], &p.mha.w_q,
                       &p.rnn1.layers[0].w_hn, &p.rnn2.layers[0].w_ir}));
  }
  {  // (d) flow forecast with fixed eps
    flow::FlowParams p = flow::FlowParams::init(3, 1, 1, rng);
    Tensor he = rng.normal_tensor({1, 4, 3});
    Tensor hd = rng.normal_tensor({1, 3, 3});
    Tensor eps = rng.normal_tensor({1, 4, 3});
    std::vector<Tensor*> inputs = {&he, &hd, &p.w_out, &p.b_out};
    ConformerParams dummy;  // gather flow tensors through a local visitor
    (void)dummy;
    for (flow::Conditioner* c : {&p.enc, &p.head, &p.steps[0]})
      for (flow::Fcn* f : {&c->mu, &c->sigma})
        for (Tensor* t : {&f->w1, &f->b1, &f->w2, &f->b2}) inputs.push_back(t);
    track("flow", num::grad_check(
                      [&](Tape&, Binder& bd) {
                        Var out = flow::flow_output(bd(he), bd(hd), p,
                                                    flow::NfVariant::Full, 2,
                                                    bd, eps);
                        return num::sum(num::mul(out, out));
                      },
                      std::span<Tensor* const>(inputs)));
  }
  {  // (e) full model loss on a 2-sample tiny config, all parameters
    ModelConfig cfg = tiny_config();
    auto batch = tiny_batch(cfg, 2, 55);
    ConformerParams p = ConformerParams::init(cfg, 2);
    Tensor eps = num::Rng(7).normal_tensor(
        flow::eps_shape(cfg.nf_variant, 2, cfg.L_x, cfg.dec_len(), cfg.d));
    auto all = p.tensors();
    track("model", num::grad_check(
                       [&](Tape&, Binder& bind) {
                         BatchVars f =
                             model::model_forward(p, batch, bind, nullptr, &eps);
                         return model::model_loss(p, f);
                       },
                       std::span<Tensor* const>(all.data(), all.size())));
  }
  if (detail.empty())
    detail = "worst relative error " + std::to_string(worst);
  return worst <= 1e-4;
}

// ---- criterion 5 ----
bool flow_reductions(std::string& detail) {
  num::Rng rng(105);
  int B = 1, L_e = 5, L_d = 4, L_y = 2, d = 3, d_t = 1;
  Tensor he = rng.normal_tensor({B, L_e, d});
  Tensor hd = rng.normal_tensor({B, L_d, d});

  // T = 0: z_T is exactly z_0
  {
    flow::FlowParams p0 = flow::FlowParams::init(d, d_t, 0, rng);
    Tape tape(false);
    Binder bind(tape);
    Var z0 = bind.input(rng.normal_tensor({B, L_d, d}));
    Var zT = flow::flow_chain(z0, bind.input(hd), p0.steps, bind);
    if (zT.id != z0.id) {
      detail = "T=0 chain did not return its input";
      return false;
    }
  }
  // identity chain reproduces z_0 within 1e-10
  {
    flow::FlowParams p = flow::FlowParams::init(d, d_t, 2, rng);
    for (auto& c : p.steps) {
      c.mu.w1 = Tensor::zeros(c.mu.w1.shape());
      c.mu.b1 = Tensor::zeros(c.mu.b1.shape());
      c.mu.w2 = Tensor::zeros(c.mu.w2.shape());
      c.mu.b2 = Tensor::zeros(c.mu.b2.shape());
      c.sigma.w1 = Tensor::zeros(c.sigma.w1.shape());
      c.sigma.b1 = Tensor::zeros(c.sigma.b1.shape());
      c.sigma.w2 = Tensor::zeros(c.sigma.w2.shape());
      c.sigma.b2 = Tensor::full(c.sigma.b2.shape(),
                                std::log(std::exp(1.0 - 1e-6) - 1.0));
    }
    Tape tape(false);
    Binder bind(tape);
    Tensor z0t = rng.normal_tensor({B, L_d, d});
    Var z0 = bind.input(z0t);
    Var zT = flow::flow_chain(z0, bind.input(hd), p.steps, bind);
    if (max_abs_diff(zT.val(), z0t) > 1e-10) {
      detail = "identity chain drifted";
      return false;
    }
  }
  // sigma collapse drives predictive variance below 1e-6
  {
    flow::FlowParams p = flow::FlowParams::init(d, d_t, 2, rng);
    auto crush = [](flow::Fcn& f) {
      f.w1 = Tensor::zeros(f.w1.shape());
      f.b1 = Tensor::zeros(f.b1.shape());
      f.w2 = Tensor::zeros(f.w2.shape());
      f.b2 = Tensor::full(f.b2.shape(), -40.0);
    };
    crush(p.enc.sigma);
    crush(p.head.sigma);
    for (auto& c : p.steps) crush(c.sigma);
    Tape tape(false);
    Binder bind(tape);
    num::Rng srng(9);
    flow::FlowSample s =
        flow::flow_forecast(bind.input(he), bind.input(hd), p,
                            flow::NfVariant::Full, L_y, 50, srng, bind);
    for (int64_t i = 0; i < s.variance.numel(); ++i)
      if (s.variance[i] > 1e-6) {
        detail = "variance survived sigma collapse";
        return false;
      }
  }
  // lambda = 1: no gradient reaches the flow's exclusive projection
  {
    ModelConfig cfg = tiny_config();
    cfg.lambda = 1.0;
    auto batch = tiny_batch(cfg, 2, 77);
    ConformerParams p = ConformerParams::init(cfg, 2);
    Tape tape(true);
    Binder bind(tape);
    num::Rng erng(5);
    BatchVars f = model::model_forward(p, batch, bind, &erng);
    tape.backward(model::model_loss(p, f));
    Tensor g = bind.grad_of(p.flow.w_out);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (g[i] != 0.0) {
        detail = "flow projection received gradient at lambda=1";
        return false;
      }
  }
  return true;
}

// ---- criterion 6 ----
bool synthetic_forecasting(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  data::SynthSpec synth;
  synth.seed = 7;
  synth.L = 4000;
  synth.d_x = 4;
  synth.periods = {24, 24, 48, 96};
  synth.noise_std = 0.1;
  data::SeriesFrame raw = data::synth_generate(synth);

  ModelConfig cfg;
  cfg.d = 64;
  cfg.heads = 4;
  cfg.L_x = 48;
  cfg.L_y = 24;
  cfg.lambda = 0.8;
  cfg.max_epochs = 10;
  cfg.patience = 10;  // let the epoch budget govern this run
  cfg.seed = 7;
  cfg.eval_samples = 8;

  data::SplitRanges split = data::split_fractions(raw.length(), 0.7, 0.1, 0.2);
  train::TrainResult res = train::train_model(raw, cfg, split);

  data::SeriesFrame frame = data::standardize(raw, res.stats);
  auto spec = cfg.window_spec();
  auto test_starts =
      data::windows_in_range(frame, spec, split.val_end, frame.length());
  train::EvalReport rep =
      train::evaluate(res.params, frame, test_starts, cfg.eval_samples, 7);
  train::Metrics base = train::persistence_baseline(frame, test_starts, spec);

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "fused mse %.4f vs persistence %.4f (ratio %.3f); epoch1 %.4f "
                "epoch5 %.4f; %d epochs in %.0fs",
                rep.fused.mse, base.mse, rep.fused.mse / base.mse,
                res.history.front().train_loss,
                res.history.size() >= 5 ? res.history[4].train_loss : -1.0,
                static_cast<int>(res.history.size()), secs);
  detail = buf;
  if (res.history.size() < 5) return false;
  if (!(rep.fused.mse <= 0.5 * base.mse)) return false;
  if (!(res.history[4].train_loss < res.history[0].train_loss)) return false;
  return secs <= 600.0;
}

// ---- criterion 7 ----
bool ablation_wiring(std::string& detail) {
  ModelConfig base = tiny_config();
  auto batch = tiny_batch(base, 2, 88);
  auto fused_for = [&](const ModelConfig& cfg) {
    ConformerParams p = ConformerParams::init(cfg, 2);
    num::Rng rng(17);
    auto results = model::model_predict(p, batch, 2, rng);
    Tensor cat = Tensor::zeros({2, cfg.L_y, p.d_t});
    for (int b = 0; b < 2; ++b)
      for (int64_t i = 0; i < results[static_cast<size_t>(b)].fused.numel(); ++i)
        cat.mutable_data()[b * results[0].fused.numel() + i] =
            results[static_cast<size_t>(b)].fused[i];
    return cat;
  };
  auto all_distinct = [&](const std::vector<Tensor>& outs, const char* what) {
    for (size_t a = 0; a < outs.size(); ++a)
      for (size_t b = a + 1; b < outs.size(); ++b)
        if (max_abs_diff(outs[a], outs[b]) <= 1e-9) {
          detail = std::string(what) + " variants " + std::to_string(a) +
                   " and " + std::to_string(b) + " coincide";
          return false;
        }
    return true;
  };

  std::vector<Tensor> input_outs;
  for (rep::FuseVariant v : rep::all_fuse_variants()) {
    ModelConfig cfg = base;
    cfg.input_variant = v;
    input_outs.push_back(fused_for(cfg));
  }
  if (!all_distinct(input_outs, "input")) return false;

  std::vector<Tensor> nf_outs;
  for (flow::NfVariant v :
       {flow::NfVariant::Full, flow::NfVariant::EncoderOnly,
        flow::NfVariant::DecoderOnly, flow::NfVariant::InitOnly,
        flow::NfVariant::Off}) {
    ModelConfig cfg = base;
    cfg.nf_variant = v;
    nf_outs.push_back(fused_for(cfg));
  }
  if (!all_distinct(nf_outs, "flow")) return false;

  std::vector<Tensor> latent_outs;
  for (auto [e, dsel] : {std::pair{flow::LatentLayer::First, flow::LatentLayer::First},
                         {flow::LatentLayer::First, flow::LatentLayer::Last},
                         {flow::LatentLayer::Last, flow::LatentLayer::First},
                         {flow::LatentLayer::Last, flow::LatentLayer::Last}}) {
    ModelConfig cfg = base;
    cfg.dec_sirn_layers = 2;  // first vs last must differ on both sides
    cfg.latents.encoder = e;
    cfg.latents.decoder = dsel;
    latent_outs.push_back(fused_for(cfg));
  }
  if (!all_distinct(latent_outs, "latent")) return false;
  detail = "10 input + 5 flow + 4 latent configurations, pairwise distinct";
  return true;
}

// ---- criterion 8 ----
bool determinism_and_persistence(std::string& detail) {
  ModelConfig cfg = tiny_config();
  cfg.max_epochs = 2;
  data::SynthSpec spec;
  spec.L = 120;
  spec.d_x = 2;
  spec.seed = 19;
  data::SeriesFrame raw = data::synth_generate(spec);
  data::SplitRanges split{72, 96};

  train::TrainResult a = train::train_model(raw, cfg, split);
  train::TrainResult b = train::train_model(raw, cfg, split);
  if (a.history.size() != b.history.size()) {
    detail = "history length differs between identical runs";
    return false;
  }
  for (size_t i = 0; i < a.history.size(); ++i)
    if (a.history[i].train_loss != b.history[i].train_loss ||
        a.history[i].val_mse != b.history[i].val_mse) {
      detail = "history differs between identical runs";
      return false;
    }
  auto ta = a.params.tensors();
  auto tb = b.params.tensors();
  for (size_t i = 0; i < ta.size(); ++i)
    for (int64_t j = 0; j < ta[i]->numel(); ++j)
      if (ta[i]->data()[j] != tb[i]->data()[j]) {
        detail = "parameters differ between identical runs";
        return false;
      }

  model::save_checkpoint("acceptance_a.ckpt", a.params, a.stats);
  model::LoadedCheckpoint lc = model::load_checkpoint("acceptance_a.ckpt");
  model::save_checkpoint("acceptance_b.ckpt", lc.params, lc.stats);
  std::ifstream f1("acceptance_a.ckpt", std::ios::binary);
  std::ifstream f2("acceptance_b.ckpt", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  if (s1 != s2 || s1.empty()) {
    detail = "checkpoint round trip is not byte-identical";
    return false;
  }

  // metrics equal an independent accumulation over the same predictions
  data::SeriesFrame frame = data::standardize(raw, a.stats);
  auto spec2 = cfg.window_spec();
  auto starts = data::windows_in_range(frame, spec2, split.val_end, frame.length());
  train::EvalReport rep = train::evaluate(lc.params, frame, starts, 2, 5);
  num::Rng rng(5);
  double se = 0, ae = 0;
  int64_t n = 0;
  for (size_t lo = 0; lo < starts.size(); lo += static_cast<size_t>(cfg.batch)) {
    size_t hi = std::min(starts.size(), lo + static_cast<size_t>(cfg.batch));
    std::vector<data::WindowSample> batch;
    for (size_t i = lo; i < hi; ++i)
      batch.push_back(data::make_window(frame, spec2, starts[i]));
    auto results = model::model_predict(lc.params, batch, 2, rng);
    for (size_t w = 0; w < batch.size(); ++w)
      for (int64_t i = 0; i < results[w].fused.numel(); ++i) {
        double dd = results[w].fused[i] - batch[w].target[i];
        se += dd * dd;
        ae += std::abs(dd);
        ++n;
      }
  }
  if (std::abs(rep.fused.mse - se / static_cast<double>(n)) > 1e-12 ||
      std::abs(rep.fused.mae - ae / static_cast<double>(n)) > 1e-12) {
    detail = "metrics disagree with the independent accumulation";
    return false;
  }
  detail = "train runs, checkpoints and metrics all bit-stable";
  return true;
}

// ---- criterion 9 (optional) ----
void full_data_hook() {
  const char* path = std::getenv("CONFORMER_ETTM1");
  if (!path) {
    std::printf(
        "[SKIP] criterion 9 (optional): set CONFORMER_ETTM1=<ETTm1 csv> to run "
        "the full-data hook\n");
    return;
  }
  try {
    data::SeriesFrame raw = data::load_csv(path, "OT", 0);
    ModelConfig cfg;
    cfg.d = 512;
    cfg.heads = 8;
    cfg.L_x = 96;
    cfg.L_y = 96;
    cfg.seed = 7;
    data::SplitRanges split = data::split_months(raw, 12, 1, 1);
    train::TrainResult res = train::train_model(raw, cfg, split);
    data::SeriesFrame frame = data::standardize(raw, res.stats);
    auto starts = data::windows_in_range(frame, cfg.window_spec(),
                                         split.val_end, frame.length());
    train::EvalReport rep =
        train::evaluate(res.params, frame, starts, cfg.eval_samples, 7);
    double reference = 0.6854;
    std::printf(
        "[INFO] criterion 9 (optional): fused test MSE %.4f (reference %.4f, "
        "ratio %.2f; not gated)\n",
        rep.fused.mse, reference, rep.fused.mse / reference);
  } catch (const std::exception& e) {
    std::printf("[INFO] criterion 9 (optional) did not complete: %s\n", e.what());
  }
}

}  // namespace

int main() {
  run_criterion(1, "attention oracle equivalence", attention_oracle);
  run_criterion(2, "complexity scaling", complexity_scaling);
  run_criterion(3, "decomposition identity", decomposition_identity);
  run_criterion(4, "gradient integrity", gradient_integrity);
  run_criterion(5, "flow reductions", flow_reductions);
  run_criterion(6, "synthetic forecasting", synthetic_forecasting);
  run_criterion(7, "ablation wiring", ablation_wiring);
  run_criterion(8, "determinism and persistence", determinism_and_persistence);
  full_data_hook();
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
