#pragma once

#include "conformer/grad_check.hpp"
#include "conformer/ops.hpp"
#include "conformer/rng.hpp"

namespace conformer::attn {

struct MhaParams {
  num::Tensor w_q, w_k, w_v, w_o;  // [d, d]; head i owns column block i
  int heads = 1;

  static MhaParams init(int d, int heads, num::Rng& rng);
  int width() const { return w_q.dim(0); }
  int head_width() const { return width() / heads; }
};

// total band span excluding self; position i attends to j iff |i-j| <= w/2
struct BandMask {
  int w = 2;
  BandMask() = default;
  explicit BandMask(int span);
  int half() const { return w / 2; }
  bool allowed(int i, int j) const { return std::abs(i - j) <= half(); }
};

// scaled dot-product attention with an optional band mask (hw < 0: none).
// q:[Lq,dk] k:[Lk,dk] v:[Lk,dv]
num::Var scaled_dot_attention(num::Var q, num::Var k, num::Var v, int hw);

// self-attention with per-head band masking over dense logits (reference)
num::Var sliding_window_mha(num::Var x, const MhaParams& p, const BandMask& m,
                            num::Binder& bind);

// unmasked full self-attention (the w >= 2(L-1) limit of the above)
num::Var full_mha(num::Var x, const MhaParams& p, num::Binder& bind);

// full cross-attention: queries from x, keys/values from ctx
num::Var cross_mha(num::Var x, num::Var ctx, const MhaParams& p,
                   num::Binder& bind);

// fused batched attention over [B,L,d] inputs: band when hw >= 0 (queries
// and keys must share length), all keys when hw < 0 (the cross bridge)
num::Var fused_mha(num::Var q_src, num::Var kv_src, const MhaParams& p, int hw,
                   num::Binder& bind);

// banded fast path: only the (w+1)-diagonal strip of logits is formed, so
// time and memory are O(w L) per head; matches sliding_window_mha to 1e-10
num::Var banded_mha_fast(num::Var x, const MhaParams& p, const BandMask& m,
                         num::Binder& bind);

}  // namespace conformer::attn
