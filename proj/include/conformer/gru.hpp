#pragma once

#include "conformer/grad_check.hpp"
#include "conformer/ops.hpp"
#include "conformer/rng.hpp"

namespace conformer::nn {

struct GruLayerWeights {
  num::Tensor w_ir, w_iz, w_in;  // [dh, din]
  num::Tensor w_hr, w_hz, w_hn;  // [dh, dh]
  num::Tensor b_ir, b_iz, b_in;  // [dh]
  num::Tensor b_hr, b_hz, b_hn;  // [dh]
};

struct GruParams {
  std::vector<GruLayerWeights> layers;

  static GruParams init(int d_in, int d_h, int num_layers, num::Rng& rng);
  int hidden() const { return layers.front().w_hr.dim(0); }
  int input() const { return layers.front().w_ir.dim(1); }
  int num_layers() const { return static_cast<int>(layers.size()); }
};

struct GruOut {
  num::Var outputs;  // hidden sequence of the top layer
  num::Var states;   // the same sequence, retained for the flow head
};

// x: [B,L,din] or [L,din]; initial hidden defaults to zeros, or pass a
// [dh] vector broadcast across the batch.
GruOut gru_forward(num::Var x, const GruParams& p, num::Binder& bind,
                   const num::Tensor* h0 = nullptr);

}  // namespace conformer::nn
