#include "conformer/model.hpp"

#include <cmath>

namespace conformer::model {

using num::Binder;
using num::Tensor;
using num::Var;

void ModelConfig::validate() const {
  if (band_w <= 0 || band_w % 2 != 0)
    throw std::invalid_argument("window size must be even and positive");
  if (d < 1 || heads < 1 || d % heads != 0)
    throw std::invalid_argument("model width must be divisible by heads");
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  if (eta < 1) throw std::invalid_argument("eta must be >= 1");
  if (decomp_kernel % 2 == 0 || decomp_kernel < 1)
    throw std::invalid_argument("decomposition kernel must be odd");
  if (k_v % 2 == 0 || k_v < 1)
    throw std::invalid_argument("value kernel k_v must be odd");
  if (flow_T < 0) throw std::invalid_argument("flow transforms must be >= 0");
  if (L_x < 1 || L_y < 1) throw std::invalid_argument("window lengths must be positive");
  if (tok() < 0 || tok() > L_x)
    throw std::invalid_argument("L_tok must lie in [0, L_x]");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (enc_sirn_layers < 1 || dec_sirn_layers < 1)
    throw std::invalid_argument("need at least one encoder and decoder layer");
  if (eval_samples < 1) throw std::invalid_argument("eval samples must be >= 1");
  if (lr < 0) throw std::invalid_argument("learning rate must be >= 0");
}

data::WindowSpec ModelConfig::window_spec() const {
  data::WindowSpec w;
  w.L_x = L_x;
  w.L_y = L_y;
  w.L_tok = tok();
  w.stride = 1;
  w.mode = mode;
  return w;
}

ConformerParams ConformerParams::init(const ModelConfig& cfg, int d_x) {
  cfg.validate();
  if (d_x < 1) throw std::invalid_argument("model: d_x must be >= 1");
  ConformerParams p;
  p.cfg = cfg;
  p.d_x = d_x;
  p.d_t = cfg.mode == data::TargetMode::Multivariate ? d_x : 1;
  num::Rng rng(cfg.seed);
  auto scales = rep::active_scales(cfg.interval_seconds);
  p.enc_embed = rep::MultiscaleEmbed::init(scales, cfg.L_x, cfg.d, rng);
  p.dec_embed = rep::MultiscaleEmbed::init(scales, cfg.dec_len(), cfg.d, rng);
  p.enc_fuse = rep::FusionParams::init(cfg.d, d_x, cfg.k_v, rng);
  p.dec_fuse = rep::FusionParams::init(cfg.d, d_x, cfg.k_v, rng);
  int enc_gru = 1;
  int dec_gru = cfg.mode == data::TargetMode::Multivariate ? 2 : 1;
  for (int l = 0; l < cfg.enc_sirn_layers; ++l)
    p.encoder.push_back(nn::SirnLayerParams::init(
        cfg.d, cfg.heads, cfg.band_w, cfg.eta, cfg.decomp_kernel, enc_gru, rng));
  for (int l = 0; l < cfg.dec_sirn_layers; ++l)
    p.decoder.push_back(nn::SirnLayerParams::init(
        cfg.d, cfg.heads, cfg.band_w, cfg.eta, cfg.decomp_kernel, dec_gru, rng));
  p.cross = attn::MhaParams::init(cfg.d, cfg.heads, rng);
  double a = std::sqrt(6.0 / (cfg.d + p.d_t));
  p.head_w = rng.uniform_tensor({p.d_t, cfg.d}, -a, a);
  p.head_b = Tensor::zeros({p.d_t});
  p.flow = flow::FlowParams::init(cfg.d, p.d_t, cfg.flow_T, rng);
  return p;
}

namespace {

void visit_gru(const std::string& prefix, nn::GruParams& g,
               const std::function<void(const std::string&, Tensor&)>& f) {
  for (size_t l = 0; l < g.layers.size(); ++l) {
    auto& w = g.layers[l];
    std::string base = prefix + ".l" + std::to_string(l) + ".";
    f(base + "w_ir", w.w_ir);
    f(base + "w_iz", w.w_iz);
    f(base + "w_in", w.w_in);
    f(base + "w_hr", w.w_hr);
    f(base + "w_hz", w.w_hz);
    f(base + "w_hn", w.w_hn);
    f(base + "b_ir", w.b_ir);
    f(base + "b_iz", w.b_iz);
    f(base + "b_in", w.b_in);
    f(base + "b_hr", w.b_hr);
    f(base + "b_hz", w.b_hz);
    f(base + "b_hn", w.b_hn);
  }
}

void visit_mha(const std::string& prefix, attn::MhaParams& m,
               const std::function<void(const std::string&, Tensor&)>& f) {
  f(prefix + ".w_q", m.w_q);
  f(prefix + ".w_k", m.w_k);
  f(prefix + ".w_v", m.w_v);
  f(prefix + ".w_o", m.w_o);
}

void visit_embed(const std::string& prefix, rep::MultiscaleEmbed& e,
                 const std::function<void(const std::string&, Tensor&)>& f) {
  for (size_t k = 0; k < e.tables.size(); ++k) {
    f(prefix + ".table" + std::to_string(k), e.tables[k]);
    f(prefix + ".mix" + std::to_string(k), e.mix[k]);
  }
  f(prefix + ".bias", e.bias);
}

void visit_sirn(const std::string& prefix, nn::SirnLayerParams& s,
                const std::function<void(const std::string&, Tensor&)>& f) {
  visit_gru(prefix + ".rnn1", s.rnn1, f);
  visit_gru(prefix + ".rnn2", s.rnn2, f);
  visit_mha(prefix + ".mha", s.mha, f);
  for (size_t l = 0; l < s.season_w.size(); ++l) {
    f(prefix + ".season_w" + std::to_string(l), s.season_w[l]);
    f(prefix + ".season_b" + std::to_string(l), s.season_b[l]);
  }
  f(prefix + ".w_out", s.w_out);
}

void visit_fcn(const std::string& prefix, flow::Fcn& n,
               const std::function<void(const std::string&, Tensor&)>& f) {
  f(prefix + ".w1", n.w1);
  f(prefix + ".b1", n.b1);
  f(prefix + ".w2", n.w2);
  f(prefix + ".b2", n.b2);
}

void visit_cond(const std::string& prefix, flow::Conditioner& c,
                const std::function<void(const std::string&, Tensor&)>& f) {
  visit_fcn(prefix + ".mu", c.mu, f);
  visit_fcn(prefix + ".sigma", c.sigma, f);
}

}  // namespace

void ConformerParams::visit(
    const std::function<void(const std::string&, Tensor&)>& f) {
  visit_embed("enc_embed", enc_embed, f);
  visit_embed("dec_embed", dec_embed, f);
  f("enc_fuse.w_v", enc_fuse.w_v);
  f("enc_fuse.b_v", enc_fuse.b_v);
  f("dec_fuse.w_v", dec_fuse.w_v);
  f("dec_fuse.b_v", dec_fuse.b_v);
  for (size_t l = 0; l < encoder.size(); ++l)
    visit_sirn("enc" + std::to_string(l), encoder[l], f);
  for (size_t l = 0; l < decoder.size(); ++l)
    visit_sirn("dec" + std::to_string(l), decoder[l], f);
  visit_mha("cross", cross, f);
  f("head_w", head_w);
  f("head_b", head_b);
  visit_cond("flow.enc", flow.enc, f);
  visit_cond("flow.head", flow.head, f);
  for (size_t t = 0; t < flow.steps.size(); ++t)
    visit_cond("flow.step" + std::to_string(t), flow.steps[t], f);
  f("flow.w_out", flow.w_out);
  f("flow.b_out", flow.b_out);
}

std::vector<Tensor*> ConformerParams::tensors() {
  std::vector<Tensor*> out;
  visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

ConformerParams ConformerParams::clone() const {
  ConformerParams copy = *this;
  copy.visit([](const std::string&, Tensor& t) { t = t.clone(); });
  return copy;
}

namespace {

// batched input representation: [B, L, d]
Var front_end(const ConformerParams& p, std::span<const data::WindowSample> batch,
              bool encoder_side, Binder& bind) {
  num::Tape& tape = bind.tape();
  const rep::MultiscaleEmbed& embed = encoder_side ? p.enc_embed : p.dec_embed;
  const rep::FusionParams& fusion = encoder_side ? p.enc_fuse : p.dec_fuse;
  int B = static_cast<int>(batch.size());
  int L = encoder_side ? p.cfg.L_x : p.cfg.dec_len();

  Tensor stacked = Tensor::zeros({B, L, p.d_x});
  std::vector<Tensor> w_r;
  std::vector<const Tensor*> marks;
  w_r.reserve(batch.size());
  marks.reserve(batch.size());
  for (int b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<size_t>(b)];
    const Tensor& x = encoder_side ? s.enc_x : s.dec_x;
    marks.push_back(encoder_side ? &s.enc_marks : &s.dec_marks);
    w_r.push_back(rep::multivariate_correlation(x).w_r);
    double* dst = stacked.mutable_data() + static_cast<long>(b) * x.numel();
    for (int64_t i = 0; i < x.numel(); ++i) dst[i] = x[i];
  }
  Var gamma = rep::multiscale_embedding_batched(marks, embed, bind);
  return rep::fuse_input_batched(tape.constant(std::move(stacked)), w_r, fusion,
                                 gamma, p.cfg.input_variant, bind);
}

Var stack_targets(std::span<const data::WindowSample> batch, num::Tape& tape) {
  int B = static_cast<int>(batch.size());
  int L_y = batch[0].target.dim(0), d_t = batch[0].target.dim(1);
  Tensor t = Tensor::zeros({B, L_y, d_t});
  double* pt = t.mutable_data();
  for (int b = 0; b < B; ++b) {
    const Tensor& tb = batch[static_cast<size_t>(b)].target;
    for (int64_t i = 0; i < tb.numel(); ++i)
      pt[static_cast<long>(b) * tb.numel() + i] = tb[i];
  }
  return tape.constant(std::move(t));
}

}  // namespace

BatchVars model_forward(const ConformerParams& p,
                        std::span<const data::WindowSample> batch,
                        Binder& bind, num::Rng* eps_rng,
                        const Tensor* fixed_eps) {
  if (batch.empty()) throw std::invalid_argument("model_forward: empty batch");
  const ModelConfig& cfg = p.cfg;
  for (const auto& s : batch) {
    if (s.enc_x.dim(0) != cfg.L_x || s.enc_x.dim(1) != p.d_x ||
        s.dec_x.dim(0) != cfg.dec_len() || s.target.dim(1) != p.d_t)
      throw std::invalid_argument("model_forward: sample shape mismatch");
  }
  num::Tape& tape = bind.tape();
  int B = static_cast<int>(batch.size());

  // encoder
  Var x_enc = front_end(p, batch, true, bind);
  Var h_e_first, h_e_last;
  for (size_t l = 0; l < p.encoder.size(); ++l) {
    nn::SirnOut o = nn::sirn_layer_forward(x_enc, p.encoder[l], bind);
    x_enc = o.x_out;
    if (l == 0) h_e_first = o.flow_state;
    h_e_last = o.flow_state;
  }
  Var h_e = cfg.latents.encoder == flow::LatentLayer::First ? h_e_first : h_e_last;

  // decoder with zero-padded target slots
  Var x_dec = front_end(p, batch, false, bind);
  Var h_d_first, h_d_last;
  for (size_t l = 0; l < p.decoder.size(); ++l) {
    nn::SirnOut o = nn::sirn_layer_forward(x_dec, p.decoder[l], bind);
    x_dec = o.x_out;
    if (l == 0) h_d_first = o.flow_state;
    h_d_last = o.flow_state;
  }
  Var h_d = cfg.latents.decoder == flow::LatentLayer::First ? h_d_first : h_d_last;

  // bridge to the encoder sequence, then project to target width
  Var bridged = num::add(x_dec, attn::fused_mha(x_dec, x_enc, p.cross, -1, bind));
  int Ld = cfg.dec_len();
  Var rows = num::add_rowvec(
      num::matmul_nt(num::reshape(bridged, {B * Ld, cfg.d}), bind(p.head_w)),
      bind(p.head_b));
  Var y_full = num::reshape(rows, {B, Ld, p.d_t});
  Var y_dec = num::slice_time(y_full, Ld - cfg.L_y, Ld);

  BatchVars out;
  out.y_dec = y_dec;
  out.h_e = h_e;
  out.h_d = h_d;
  out.targets = stack_targets(batch, tape);
  if (cfg.nf_variant != flow::NfVariant::Off) {
    Tensor eps;
    if (fixed_eps) {
      eps = *fixed_eps;
    } else {
      if (!eps_rng)
        throw std::invalid_argument("model_forward: need eps source for the flow");
      eps = eps_rng->normal_tensor(
          flow::eps_shape(cfg.nf_variant, B, cfg.L_x, Ld, cfg.d));
    }
    out.z_out = flow::flow_output(h_e, h_d, p.flow, cfg.nf_variant, cfg.L_y,
                                  bind, eps);
  }
  return out;
}

Var model_loss(const ConformerParams& p, const BatchVars& f) {
  if (!f.z_out.defined()) return num::mse(f.y_dec, f.targets);
  Var dec_term = num::scale(num::mse(f.y_dec, f.targets), p.cfg.lambda);
  Var flow_term = num::scale(num::mse(f.z_out, f.targets), 1.0 - p.cfg.lambda);
  return num::add(dec_term, flow_term);
}

std::vector<ForecastResult> model_predict(const ConformerParams& p,
                                          std::span<const data::WindowSample> batch,
                                          int n_samples, num::Rng& rng) {
  num::Tape tape(false);
  Binder bind(tape);
  BatchVars f = model_forward(p, batch, bind, &rng);
  int B = static_cast<int>(batch.size());
  int L_y = p.cfg.L_y, d_t = p.d_t;
  double lam = p.cfg.lambda;

  Tensor z_mean, z_var;
  if (p.cfg.nf_variant != flow::NfVariant::Off) {
    flow::FlowSample s = flow::flow_forecast(f.h_e, f.h_d, p.flow,
                                             p.cfg.nf_variant, L_y, n_samples,
                                             rng, bind);
    z_mean = s.mean;
    z_var = s.variance;
  }

  std::vector<ForecastResult> out(static_cast<size_t>(B));
  const Tensor& y = f.y_dec.val();
  long inner = static_cast<long>(L_y) * d_t;
  for (int b = 0; b < B; ++b) {
    ForecastResult& r = out[static_cast<size_t>(b)];
    r.y_dec = Tensor::zeros({L_y, d_t});
    r.z_out = Tensor::zeros({L_y, d_t});
    r.variance = Tensor::zeros({L_y, d_t});
    r.fused = Tensor::zeros({L_y, d_t});
    for (long i = 0; i < inner; ++i) {
      double yd = y[static_cast<long>(b) * inner + i];
      double zo = z_mean.defined() ? z_mean[static_cast<long>(b) * inner + i] : yd;
      double var = z_var.defined() ? z_var[static_cast<long>(b) * inner + i] : 0.0;
      r.y_dec.mutable_data()[i] = yd;
      r.z_out.mutable_data()[i] = zo;
      r.variance.mutable_data()[i] = var;
      r.fused.mutable_data()[i] = z_mean.defined() ? lam * yd + (1.0 - lam) * zo : yd;
    }
  }
  return out;
}

}  // namespace conformer::model
