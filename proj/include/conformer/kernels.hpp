#pragma once

#include <vector>

// Raw dense kernels shared by the op library and the fused layers.
// All matmul variants accumulate into C; callers zero-initialize.

namespace conformer::num::kern {

// C[m x n] += A[m x k] * B[k x n]
inline void matmul_acc(const double* A, const double* B, double* C, int m,
                       int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = C + static_cast<long>(i) * n;
    const double* ai = A + static_cast<long>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double a = ai[p];
      const double* bp = B + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
// B is transposed into a scratch buffer so the hot loop streams along rows
// (a plain dot-product reduction does not vectorize under strict FP rules)
inline void matmul_nt_acc(const double* A, const double* B, double* C, int m,
                          int k, int n) {
  if (static_cast<long>(m) * k * n < 16 * 1024) {
    for (int i = 0; i < m; ++i) {
      const double* ai = A + static_cast<long>(i) * k;
      double* ci = C + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* bj = B + static_cast<long>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
        ci[j] += acc;
      }
    }
    return;
  }
  thread_local std::vector<double> scratch;
  scratch.resize(static_cast<size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < k; ++p)
      scratch[static_cast<size_t>(p) * n + j] = B[static_cast<long>(j) * k + p];
  matmul_acc(A, scratch.data(), C, m, k, n);
}

// C[m x n] += A[k x m]^T * B[k x n]
inline void matmul_tn_acc(const double* A, const double* B, double* C, int m,
                          int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = A + static_cast<long>(p) * m;
    const double* bp = B + static_cast<long>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double a = ap[i];
      double* ci = C + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
    }
  }
}

inline void axpy(double a, const double* x, double* y, long n) {
  for (long i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace conformer::num::kern
