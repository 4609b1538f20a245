#pragma once

#include "conformer/model.hpp"

namespace conformer::train {

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<num::Tensor> m, v;

  Adam(double lr_, const std::vector<num::Tensor*>& params);
  void step(const std::vector<num::Tensor*>& params,
            const std::vector<num::Tensor>& grads);
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_mse = 0;
  double val_mae = 0;
};

struct Metrics {
  double mse = 0;
  double mae = 0;
};

struct EvalReport {
  Metrics dec, flow, fused;
  int windows = 0;
};

struct TrainResult {
  model::ConformerParams params;  // best-validation snapshot
  data::StandardizeStats stats;
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

// Adam on shuffled batches with early stopping on fused validation MSE.
TrainResult train_model(const data::SeriesFrame& raw,
                        const model::ModelConfig& cfg,
                        const data::SplitRanges& split);

// metrics over the given window starts of a standardized frame
EvalReport evaluate(const model::ConformerParams& params,
                    const data::SeriesFrame& standardized,
                    const std::vector<int>& starts, int n_samples,
                    uint64_t sample_seed);

// per-point evaluation dump: window_start, step, variable, target and the
// three heads, all on standardized values
void evaluate_dump(const model::ConformerParams& params,
                   const data::SeriesFrame& standardized,
                   const std::vector<int>& starts, int n_samples,
                   uint64_t sample_seed, const std::string& csv_path);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path);
void write_metrics_csv(const EvalReport& r, const std::string& path);

// rolling forecasts written destandardized (variance stays standardized)
void predict_csv(const model::ConformerParams& params,
                 const data::StandardizeStats& stats,
                 const data::SeriesFrame& raw_frame, int stride, int n_samples,
                 uint64_t sample_seed, const std::string& path);

// repeat-last-value reference forecast, fused-metric convention
Metrics persistence_baseline(const data::SeriesFrame& standardized,
                             const std::vector<int>& starts,
                             const data::WindowSpec& spec);

}  // namespace conformer::train
