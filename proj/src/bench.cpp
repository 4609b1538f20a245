#include "conformer/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "conformer/kernels.hpp"

namespace conformer::bench {

using num::Tensor;

Tensor dense_mha_value(const Tensor& x, const attn::MhaParams& p, int hw) {
  int L = x.dim(0), d = x.dim(1);
  int heads = p.heads, dh = d / heads;
  double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = Tensor::zeros({L, d});
  Tensor k = Tensor::zeros({L, d});
  Tensor v = Tensor::zeros({L, d});
  num::kern::matmul_acc(x.data(), p.w_q.data(), q.mutable_data(), L, d, d);
  num::kern::matmul_acc(x.data(), p.w_k.data(), k.mutable_data(), L, d, d);
  num::kern::matmul_acc(x.data(), p.w_v.data(), v.mutable_data(), L, d, d);
  Tensor heads_out = Tensor::zeros({L, d});
  for (int h = 0; h < heads; ++h) {
    int c0 = h * dh;
    Tensor logits = Tensor::zeros({L, L});
    double* pl = logits.mutable_data();
    for (int i = 0; i < L; ++i) {
      const double* qi = q.data() + static_cast<long>(i) * d + c0;
      double* row = pl + static_cast<long>(i) * L;
      for (int j = 0; j < L; ++j) {
        const double* kj = k.data() + static_cast<long>(j) * d + c0;
        double acc = 0.0;
        for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
        row[j] = acc * inv;
      }
    }
    // in-place band softmax
    for (int i = 0; i < L; ++i) {
      int j0 = hw < 0 ? 0 : std::max(0, i - hw);
      int j1 = hw < 0 ? L - 1 : std::min(L - 1, i + hw);
      double* row = pl + static_cast<long>(i) * L;
      double mx = row[j0];
      for (int j = j0 + 1; j <= j1; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (int j = j0; j <= j1; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      double zi = 1.0 / z;
      double* oi = heads_out.mutable_data() + static_cast<long>(i) * d + c0;
      for (int j = j0; j <= j1; ++j) {
        double pij = row[j] * zi;
        const double* vj = v.data() + static_cast<long>(j) * d + c0;
        for (int c = 0; c < dh; ++c) oi[c] += pij * vj[c];
      }
    }
  }
  Tensor y = Tensor::zeros({L, d});
  num::kern::matmul_acc(heads_out.data(), p.w_o.data(), y.mutable_data(), L, d, d);
  return y;
}

namespace {

double median_of_means(std::vector<double> samples, int groups) {
  if (samples.empty()) return 0;
  groups = std::max(1, std::min<int>(groups, static_cast<int>(samples.size())));
  size_t per = samples.size() / static_cast<size_t>(groups);
  std::vector<double> means;
  for (int g = 0; g < groups; ++g) {
    size_t lo = static_cast<size_t>(g) * per;
    size_t hi = g == groups - 1 ? samples.size() : lo + per;
    double acc = 0;
    for (size_t i = lo; i < hi; ++i) acc += samples[i];
    means.push_back(acc / static_cast<double>(hi - lo));
  }
  std::sort(means.begin(), means.end());
  return means[means.size() / 2];
}

}  // namespace

std::vector<BenchRow> bench_attention(const BenchConfig& cfg) {
  std::vector<BenchRow> rows;
  num::Rng rng(cfg.seed);
  attn::BandMask band(cfg.band_w);
  attn::MhaParams params = attn::MhaParams::init(cfg.d, cfg.heads, rng);
  using clock = std::chrono::steady_clock;

  for (int L : cfg.lengths) {
    Tensor x = rng.normal_tensor({L, cfg.d});
    for (int variant = 0; variant < 2; ++variant) {
      bool banded = variant == 0;
      auto run_once = [&] {
        if (banded) {
          num::Tape tape(false);
          num::Binder bind(tape);
          attn::banded_mha_fast(tape.constant(x), params, band, bind);
        } else {
          dense_mha_value(x, params, band.half());
        }
      };
      for (int wu = 0; wu < cfg.warmup; ++wu) run_once();
      num::alloc_stats::reset_peak();
      int64_t base = num::alloc_stats::current_bytes();
      std::vector<double> times;
      times.reserve(static_cast<size_t>(cfg.trials));
      for (int tr = 0; tr < cfg.trials; ++tr) {
        auto t0 = clock::now();
        run_once();
        auto t1 = clock::now();
        times.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      BenchRow row;
      row.L = L;
      row.variant = banded ? "banded" : "dense";
      row.mean_ms = median_of_means(times, 5);
      row.peak_bytes = num::alloc_stats::peak_bytes() - base;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("bench: cannot open " + path);
  out << "L,variant,mean_ms,peak_bytes\n";
  for (const auto& r : rows)
    out << r.L << "," << r.variant << "," << r.mean_ms << "," << r.peak_bytes
        << "\n";
}

}  // namespace conformer::bench
