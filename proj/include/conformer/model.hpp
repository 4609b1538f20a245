#pragma once

#include <functional>
#include <span>

#include "conformer/dataio.hpp"
#include "conformer/inputrep.hpp"
#include "conformer/normflow.hpp"
#include "conformer/sirn.hpp"

namespace conformer::model {

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int band_w = 2;  // sliding-window attention span
  double lambda = 0.8;
  int eta = 2;
  int decomp_kernel = 25;
  int k_v = 3;
  int flow_T = 2;
  int L_x = 48;
  int L_y = 24;
  int L_tok = -1;  // -1: L_x / 2
  data::TargetMode mode = data::TargetMode::Multivariate;
  rep::FuseVariant input_variant = rep::FuseVariant::Full;
  flow::NfVariant nf_variant = flow::NfVariant::Full;
  flow::LatentSelection latents;
  double lr = 1e-4;
  int batch = 32;
  int max_epochs = 10;
  int patience = 3;
  uint64_t seed = 1;
  int enc_sirn_layers = 2;
  int dec_sirn_layers = 1;
  int eval_samples = 8;
  int64_t interval_seconds = 3600;

  int tok() const { return L_tok < 0 ? L_x / 2 : L_tok; }
  int dec_len() const { return tok() + L_y; }
  void validate() const;
  data::WindowSpec window_spec() const;
};

struct ConformerParams {
  ModelConfig cfg;
  int d_x = 0;
  int d_t = 0;
  rep::MultiscaleEmbed enc_embed, dec_embed;
  rep::FusionParams enc_fuse, dec_fuse;
  std::vector<nn::SirnLayerParams> encoder;
  std::vector<nn::SirnLayerParams> decoder;
  attn::MhaParams cross;
  num::Tensor head_w, head_b;  // decoder head: [d_t, d], [d_t]
  flow::FlowParams flow;

  static ConformerParams init(const ModelConfig& cfg, int d_x);
  void visit(const std::function<void(const std::string&, num::Tensor&)>& f);
  std::vector<num::Tensor*> tensors();
  ConformerParams clone() const;
};

struct BatchVars {
  num::Var y_dec;    // [B, L_y, d_t]
  num::Var z_out;    // undefined when the flow branch is off
  num::Var h_e;      // [B, L_x, d]
  num::Var h_d;      // [B, dec_len, d]
  num::Var targets;  // constant [B, L_y, d_t]
};

// One reparameterized draw; when fixed_eps is given it must have
// flow::eps_shape(...); otherwise noise is drawn from eps_rng.
BatchVars model_forward(const ConformerParams& p,
                        std::span<const data::WindowSample> batch,
                        num::Binder& bind, num::Rng* eps_rng,
                        const num::Tensor* fixed_eps = nullptr);

// lambda * MSE(decoder head) + (1-lambda) * MSE(flow head)
num::Var model_loss(const ConformerParams& p, const BatchVars& f);

struct ForecastResult {
  num::Tensor y_dec;     // [L_y, d_t]
  num::Tensor z_out;     // [L_y, d_t]
  num::Tensor variance;  // [L_y, d_t]
  num::Tensor fused;     // lambda * y_dec + (1-lambda) * z_out
};

// evaluation path: decoder head plus n_samples flow draws per window
std::vector<ForecastResult> model_predict(const ConformerParams& p,
                                          std::span<const data::WindowSample> batch,
                                          int n_samples, num::Rng& rng);

}  // namespace conformer::model
