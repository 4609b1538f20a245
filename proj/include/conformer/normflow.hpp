#pragma once

#include <string>
#include <vector>

#include "conformer/grad_check.hpp"
#include "conformer/ops.hpp"
#include "conformer/rng.hpp"

namespace conformer::flow {

// one-hidden-layer fully connected map, tanh hidden
struct Fcn {
  num::Tensor w1, b1;  // [hidden, in], [hidden]
  num::Tensor w2, b2;  // [out, hidden], [out]
  static Fcn init(int in, int hidden, int out, num::Rng& rng);
};

num::Var fcn_apply(const Fcn& f, num::Var x, num::Binder& bind);

// mu / sigma pair; sigma passes through softplus with a 1e-6 floor
struct Conditioner {
  Fcn mu, sigma;
  static Conditioner init(int in, int hidden, int out, num::Rng& rng);
};

num::Var sigma_apply(const Fcn& f, num::Var x, num::Binder& bind);

struct FlowParams {
  Conditioner enc;                 // conditions on h_e
  Conditioner head;                // conditions on h_d to start the chain
  std::vector<Conditioner> steps;  // condition on [h_d | z]
  num::Tensor w_out, b_out;        // row projection d -> d_t

  static FlowParams init(int d, int d_t, int T, num::Rng& rng);
  int transforms() const { return static_cast<int>(steps.size()); }
};

enum class NfVariant { Full, EncoderOnly, DecoderOnly, InitOnly, Off };
NfVariant nf_variant_from(const std::string& name);
std::string to_string(NfVariant v);

enum class LatentLayer { First, Last };
struct LatentSelection {
  LatentLayer encoder = LatentLayer::Last;
  LatentLayer decoder = LatentLayer::Last;
};

// z_e = mu(h) + sigma(h) * eps, per position
num::Var encoder_latent(num::Var h_e, num::Var eps, const Conditioner& c,
                        num::Binder& bind);
// z_0 = mu(h_d) + sigma(h_d) * z_e (z_e already aligned to decoder length)
num::Var init_flow(num::Var h_d, num::Var z_e_aligned, const Conditioner& c,
                   num::Binder& bind);
// z_t = mu([h_d|z]) + sigma([h_d|z]) * z, t = 1..T
num::Var flow_chain(num::Var z0, num::Var h_d,
                    const std::vector<Conditioner>& steps, num::Binder& bind);

// draw shape required for a variant; h_e: [B,L_e,d], h_d: [B,L_d,d]
num::Shape eps_shape(NfVariant v, int B, int L_e, int L_d, int d);

// single reparameterized draw ending in the last L_y rows projected to d_t;
// undefined Var when the branch is off
num::Var flow_output(num::Var h_e, num::Var h_d, const FlowParams& p,
                     NfVariant variant, int L_y, num::Binder& bind,
                     const num::Tensor& eps);

struct FlowSample {
  num::Tensor mean;      // [B, L_y, d_t]
  num::Tensor variance;  // [B, L_y, d_t], population variance over draws
};

// n_samples independent draws; mean is the flow point forecast
FlowSample flow_forecast(num::Var h_e, num::Var h_d, const FlowParams& p,
                         NfVariant variant, int L_y, int n_samples,
                         num::Rng& rng, num::Binder& bind);

}  // namespace conformer::flow
