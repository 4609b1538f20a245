#pragma once

#include "conformer/attention.hpp"
#include "conformer/gru.hpp"

namespace conformer::nn {

// One SIRN block: recurrent gate over the input, windowed attention for
// local structure, then repeated trend/seasonal distillation whose trends
// feed a second recurrent pass.
struct SirnLayerParams {
  GruParams rnn1;  // global gate; its hidden sequence feeds the flow head
  GruParams rnn2;  // trend aggregator
  attn::MhaParams mha;
  attn::BandMask band;
  std::vector<num::Tensor> season_w;  // per distillation step [d, d, 3]
  std::vector<num::Tensor> season_b;  // per distillation step [d]
  num::Tensor w_out;                  // [d, d]
  int decomp_kernel = 25;
  int eta = 2;

  static SirnLayerParams init(int d, int heads, int band_w, int eta,
                              int decomp_kernel, int gru_layers, num::Rng& rng);
};

// moving-average trend (replicate padding) and seasonal residual;
// x is [L,d] or [B,L,d]; trend + seasonal == x exactly
struct Decomposed {
  num::Var trend;
  num::Var seasonal;
};
Decomposed series_decompose(num::Var x, int kernel);

// how many decompositions have run (test instrumentation)
int64_t decompose_count();

struct SirnOut {
  num::Var x_out;       // same shape as the input
  num::Var flow_state;  // rnn1 hidden sequence on the block input
};

SirnOut sirn_layer_forward(num::Var x_in, const SirnLayerParams& p,
                           num::Binder& bind);

}  // namespace conformer::nn
