#pragma once

#include <vector>

#include "conformer/tape.hpp"

namespace conformer::num {

enum class Act { Sigmoid, Tanh, Softplus, Gelu };

// elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var activation(Var a, Act kind);

// linear algebra, rank-2
Var matmul(Var a, Var b);     // [m,k]*[k,n]
Var matmul_nt(Var a, Var b);  // [m,k]*[n,k]^T -> [m,n]
Var matmul_tn(Var a, Var b);  // [k,m]^T*[k,n] -> [m,n]
Var transpose2d(Var a);

// shape plumbing
Var reshape(Var a, Shape s);                     // zero-copy
Var slice_rows(Var a, int r0, int r1);           // leading axis, zero-copy
Var slice_cols(Var a, int c0, int c1);           // rank-2, copies
Var concat_cols(Var a, Var b);                   // rank-2
Var concat_rows(const std::vector<Var>& parts);  // leading axis

// reductions / broadcasts
Var sum(Var a);
Var mean(Var a);
Var mse(Var a, Var b);  // mean squared difference, scalar

// softmax over `axis` of a rank-2 tensor (0: down columns, 1: along rows)
Var softmax(Var a, int axis);
// row softmax of square logits restricted to the band |i-j| <= hw
// (hw < 0 means no mask). Entries outside the band are exactly zero.
Var masked_softmax_band(Var logits, int hw);

// rank-2 channels-major signal ops
Var conv1d(Var x, Var w, Var b);  // x[Cin,L], w[Cout,Cin,k] odd k, b[Cout]
Var avgpool1d_replicate(Var x, int kernel);  // x[C,L]

// rank-3 [B,L,C] time-major helpers
Var shift_time(Var x, int offset);  // zero-fill per sample
Var avgpool_time(Var x, int kernel);
Var mean_time(Var x);                  // -> [B,C]
Var broadcast_time(Var x, int L);      // [B,C] -> [B,L,C]
Var slice_time(Var x, int t0, int t1); // copies

// misc
Var rowscale(Var x, Var s);     // x[m,n] scaled per row by s[m]
Var add_rowvec(Var x, Var v);   // x[m,n] + v[n] per row
Var gather_rows(Var table, const std::vector<int>& idx);
Var matmul_lhs_batched(Var a, Var x);  // a[Lq,Lk] applied to each x[b] of [B,Lk,d]
Var add_bias_time(Var x, Var bias);    // x[B,L,d] + bias[L,d] per sample

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// raw (non-tape) helpers used by data-derived constants
Tensor softmax_tensor(const Tensor& x, int axis);

}  // namespace conformer::num
