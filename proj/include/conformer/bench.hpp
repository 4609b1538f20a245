#pragma once

#include <string>
#include <vector>

#include "conformer/attention.hpp"

namespace conformer::bench {

struct BenchConfig {
  std::vector<int> lengths = {512, 1024, 2048, 4096};
  int trials = 25;
  int warmup = 10;
  int d = 64;
  int heads = 4;
  int band_w = 32;
  uint64_t seed = 7;
};

struct BenchRow {
  int L = 0;
  std::string variant;  // "banded" or "dense"
  double mean_ms = 0;   // median-of-means over trial groups
  int64_t peak_bytes = 0;
};

// raw dense reference: full per-head logits, optional band mask. Used for
// timing the quadratic path and as an attention oracle in tests.
num::Tensor dense_mha_value(const num::Tensor& x, const attn::MhaParams& p,
                            int hw);

std::vector<BenchRow> bench_attention(const BenchConfig& cfg);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

}  // namespace conformer::bench
