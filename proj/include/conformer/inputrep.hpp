#pragma once

#include <string>
#include <vector>

#include "conformer/grad_check.hpp"
#include "conformer/ops.hpp"
#include "conformer/rng.hpp"

namespace conformer::rep {

// All sequence tensors here are time-major: [L, channels].

// ---- inter-variable correlation from the window's own content ----

struct CorrelationWeights {
  num::Tensor w_r;  // [d_x, d_x], each row sums to 1
};

// circular cross-correlation profile r_ij(tau)/L of the mean-removed
// columns i and j, computed through the FFT
std::vector<double> cross_correlation(const num::Tensor& window_tm, int i, int j);

// MR matrix: entry (i,j) is the max over lags of the circular
// cross-correlation between variables i and j
num::Tensor correlation_matrix(const num::Tensor& window_tm);

// row-wise softmax of the MR matrix
CorrelationWeights multivariate_correlation(const num::Tensor& window_tm);

// ---- multiscale calendar embedding ----

// mark-column indices active for a sampling interval
std::vector<int> active_scales(int64_t interval_seconds);

struct MultiscaleEmbed {
  std::vector<int> scales;          // mark-column indices
  std::vector<num::Tensor> tables;  // per scale: [cardinality, d]
  std::vector<num::Tensor> mix;     // per scale: [L, L] time mixing
  num::Tensor bias;                 // [L, d]

  static MultiscaleEmbed init(const std::vector<int>& scales, int L, int d,
                              num::Rng& rng);
  int window_len() const { return bias.dim(0); }
  int width() const { return bias.dim(1); }
};

// marks: [L, 5] zero-based codes; returns [L, d]
num::Var multiscale_embedding(const num::Tensor& marks,
                              const MultiscaleEmbed& embed, num::Binder& bind);

// whole-batch variant: marks per sample, returns [B, L, d]
num::Var multiscale_embedding_batched(const std::vector<const num::Tensor*>& marks,
                                      const MultiscaleEmbed& embed,
                                      num::Binder& bind);

// ---- fusion of correlation, raw series and calendar dynamics ----

struct FusionParams {
  num::Tensor w_v;  // [d, d_x, k_v], k_v odd
  num::Tensor b_v;  // [d]
  static FusionParams init(int d, int d_x, int k_v, num::Rng& rng);
};

enum class FuseVariant {
  Full,
  MinusGamma,
  MinusR,
  MinusRMinusGamma,
  MinusX,
  MinusXMinusGamma,
  Method1,
  Method2,
  Method3,
  Method4,
};

FuseVariant fuse_variant_from(const std::string& name);
std::string to_string(FuseVariant v);
const std::vector<FuseVariant>& all_fuse_variants();

// same-length convolution along time; x is [L, Cin] or [B, L, Cin]
num::Var conv_time(num::Var x, num::Var w, num::Var b);

// x: [L, d_x]; w_r is data-derived and enters as a constant; gamma_bar: [L, d]
num::Var fuse_input(num::Var x, const num::Tensor& w_r,
                    const FusionParams& fusion, num::Var gamma_bar,
                    FuseVariant variant, num::Binder& bind);

// whole-batch variant: x [B,L,d_x] with per-sample correlation weights;
// gamma_bar [B,L,d]; returns [B,L,d]
num::Var fuse_input_batched(num::Var x, const std::vector<num::Tensor>& w_r,
                            const FusionParams& fusion, num::Var gamma_bar,
                            FuseVariant variant, num::Binder& bind);

}  // namespace conformer::rep
