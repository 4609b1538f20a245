#include "conformer/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace conformer::train {

using model::BatchVars;
using model::ConformerParams;
using model::ModelConfig;
using num::Binder;
using num::Tensor;
using num::Var;

Adam::Adam(double lr_, const std::vector<Tensor*>& params) : lr(lr_) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (Tensor* p : params) {
    m.push_back(Tensor::zeros(p->shape()));
    v.push_back(Tensor::zeros(p->shape()));
  }
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<Tensor>& grads) {
  if (params.size() != grads.size() || params.size() != m.size())
    throw std::invalid_argument("adam: parameter/gradient count mismatch");
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->mutable_data();
    const double* g = grads[i].data();
    double* mi = m[i].mutable_data();
    double* vi = v[i].mutable_data();
    int64_t n = params[i]->numel();
    for (int64_t j = 0; j < n; ++j) {
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
      double mhat = mi[j] / bc1;
      double vhat = vi[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

std::vector<data::WindowSample> make_batch(const data::SeriesFrame& frame,
                                           const data::WindowSpec& spec,
                                           const std::vector<int>& starts,
                                           size_t lo, size_t hi) {
  std::vector<data::WindowSample> out;
  out.reserve(hi - lo);
  for (size_t i = lo; i < hi; ++i)
    out.push_back(data::make_window(frame, spec, starts[i]));
  return out;
}

struct Accum {
  double se = 0, ae = 0;
  int64_t n = 0;
  void add(const Tensor& pred, const Tensor& truth) {
    for (int64_t i = 0; i < pred.numel(); ++i) {
      double d = pred[i] - truth[i];
      se += d * d;
      ae += std::abs(d);
    }
    n += pred.numel();
  }
  Metrics metrics() const {
    return Metrics{n ? se / static_cast<double>(n) : 0.0,
                   n ? ae / static_cast<double>(n) : 0.0};
  }
};

}  // namespace

EvalReport evaluate(const ConformerParams& params,
                    const data::SeriesFrame& standardized,
                    const std::vector<int>& starts, int n_samples,
                    uint64_t sample_seed) {
  const ModelConfig& cfg = params.cfg;
  data::WindowSpec spec = cfg.window_spec();
  num::Rng rng(sample_seed);
  Accum dec, fl, fu;
  for (size_t lo = 0; lo < starts.size(); lo += static_cast<size_t>(cfg.batch)) {
    size_t hi = std::min(starts.size(), lo + static_cast<size_t>(cfg.batch));
    auto batch = make_batch(standardized, spec, starts, lo, hi);
    auto results = model::model_predict(params, batch, n_samples, rng);
    for (size_t b = 0; b < batch.size(); ++b) {
      dec.add(results[b].y_dec, batch[b].target);
      fl.add(results[b].z_out, batch[b].target);
      fu.add(results[b].fused, batch[b].target);
    }
  }
  EvalReport r;
  r.dec = dec.metrics();
  r.flow = fl.metrics();
  r.fused = fu.metrics();
  r.windows = static_cast<int>(starts.size());
  return r;
}

void evaluate_dump(const ConformerParams& params,
                   const data::SeriesFrame& standardized,
                   const std::vector<int>& starts, int n_samples,
                   uint64_t sample_seed, const std::string& csv_path) {
  const ModelConfig& cfg = params.cfg;
  data::WindowSpec spec = cfg.window_spec();
  num::Rng rng(sample_seed);
  std::ofstream out(csv_path);
  if (!out) throw data::DataError("evaluate: cannot open " + csv_path);
  out << "window_start,horizon_step,variable,target,y_dec,z_out,fused\n";
  char buf[160];
  for (size_t lo = 0; lo < starts.size(); lo += static_cast<size_t>(cfg.batch)) {
    size_t hi = std::min(starts.size(), lo + static_cast<size_t>(cfg.batch));
    auto batch = make_batch(standardized, spec, starts, lo, hi);
    auto results = model::model_predict(params, batch, n_samples, rng);
    for (size_t b = 0; b < batch.size(); ++b)
      for (int i = 0; i < cfg.L_y; ++i)
        for (int j = 0; j < params.d_t; ++j) {
          std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                        batch[b].start, i, j, batch[b].target.at({i, j}),
                        results[b].y_dec.at({i, j}), results[b].z_out.at({i, j}),
                        results[b].fused.at({i, j}));
          out << buf;
        }
  }
}

TrainResult train_model(const data::SeriesFrame& raw, const ModelConfig& cfg,
                        const data::SplitRanges& split) {
  cfg.validate();
  data::WindowSpec spec = cfg.window_spec();
  if (data::window_count(raw.length(), cfg.L_x, cfg.L_y) < 1)
    throw data::DataError("series too short");

  data::StandardizeStats stats = data::fit_stats(raw, 0, split.train_end);
  data::SeriesFrame frame = data::standardize(raw, stats);

  auto train_starts = data::windows_in_range(frame, spec, 0, split.train_end);
  auto val_starts =
      data::windows_in_range(frame, spec, split.train_end, split.val_end);
  if (train_starts.empty()) throw data::DataError("train: empty training split");
  if (val_starts.empty()) throw data::DataError("train: empty validation split");

  ConformerParams params = ConformerParams::init(cfg, frame.dims());
  auto tensors = params.tensors();
  Adam adam(cfg.lr, tensors);

  TrainResult result;
  result.stats = stats;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    num::Rng shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch)));
    num::Rng eps_rng(cfg.seed ^ (0xc2b2ae3d27d4eb4full * static_cast<uint64_t>(epoch)));
    std::vector<int> order = train_starts;
    num::shuffle(order, shuffle_rng);

    double loss_sum = 0;
    int64_t seen = 0;
    for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(cfg.batch)) {
      size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg.batch));
      auto batch = make_batch(frame, spec, order, lo, hi);
      num::Tape tape(true);
      Binder bind(tape);
      BatchVars f = model::model_forward(params, batch, bind, &eps_rng);
      Var loss = model::model_loss(params, f);
      double lv = loss.val()[0];
      if (!std::isfinite(lv))
        throw num::NumericError("train: non-finite loss at epoch " +
                                std::to_string(epoch));
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(tensors.size());
      for (Tensor* t : tensors) grads.push_back(bind.grad_of(*t));
      adam.step(tensors, grads);
      loss_sum += lv * static_cast<double>(hi - lo);
      seen += static_cast<int64_t>(hi - lo);
    }

    EvalReport val = evaluate(params, frame, val_starts, 1,
                              cfg.seed ^ (0xa0761d6478bd642full *
                                          static_cast<uint64_t>(epoch)));
    EpochStats es;
    es.epoch = epoch;
    es.train_loss = loss_sum / static_cast<double>(seen);
    es.val_mse = val.fused.mse;
    es.val_mae = val.fused.mae;
    result.history.push_back(es);

    if (es.val_mse < best_val) {
      best_val = es.val_mse;
      result.params = params.clone();
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }
  if (result.best_epoch == 0) {
    result.params = params.clone();
    result.best_epoch = static_cast<int>(result.history.size());
  }
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data::DataError("history: cannot open " + path);
  out << "epoch,train_loss,val_mse,val_mae\n";
  char buf[120];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch,
                  e.train_loss, e.val_mse, e.val_mae);
    out << buf;
  }
}

void write_metrics_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data::DataError("metrics: cannot open " + path);
  out << "head,mse,mae\n";
  char buf[100];
  std::snprintf(buf, sizeof(buf), "decoder,%.17g,%.17g\n", r.dec.mse, r.dec.mae);
  out << buf;
  std::snprintf(buf, sizeof(buf), "flow,%.17g,%.17g\n", r.flow.mse, r.flow.mae);
  out << buf;
  std::snprintf(buf, sizeof(buf), "fused,%.17g,%.17g\n", r.fused.mse, r.fused.mae);
  out << buf;
}

void predict_csv(const ConformerParams& params,
                 const data::StandardizeStats& stats,
                 const data::SeriesFrame& raw_frame, int stride, int n_samples,
                 uint64_t sample_seed, const std::string& path) {
  const ModelConfig& cfg = params.cfg;
  if (raw_frame.length() < cfg.L_x)
    throw data::DataError("predict: frame shorter than the input window");
  data::SeriesFrame frame = data::standardize(raw_frame, stats);
  data::WindowSpec spec = cfg.window_spec();
  if (stride < 1) stride = cfg.L_y;

  // forecasting windows only need L_x rows of history; targets may run
  // past the end of the frame, so windows are clipped to forecast starts
  std::vector<int> starts;
  for (int s = 0; s + cfg.L_x + cfg.L_y <= frame.length(); s += stride)
    starts.push_back(s);
  if (starts.empty()) throw data::DataError("predict: series too short to roll");

  // destandardization vectors for the target slice
  int d_t = params.d_t;
  std::vector<double> mu(static_cast<size_t>(d_t)), sd(static_cast<size_t>(d_t));
  for (int j = 0; j < d_t; ++j) {
    int col = cfg.mode == data::TargetMode::Multivariate ? j
                                                         : frame.target_index;
    mu[static_cast<size_t>(j)] = stats.mean[col];
    sd[static_cast<size_t>(j)] = stats.std[col];
  }

  num::Rng rng(sample_seed);
  std::ofstream out(path);
  if (!out) throw data::DataError("predict: cannot open " + path);
  out << "window_start,horizon_step,variable,y_dec,z_out,fused,variance\n";
  char buf[200];
  for (size_t lo = 0; lo < starts.size(); lo += static_cast<size_t>(cfg.batch)) {
    size_t hi = std::min(starts.size(), lo + static_cast<size_t>(cfg.batch));
    auto batch = make_batch(frame, spec, starts, lo, hi);
    auto results = model::model_predict(params, batch, n_samples, rng);
    for (size_t b = 0; b < batch.size(); ++b)
      for (int i = 0; i < cfg.L_y; ++i)
        for (int j = 0; j < d_t; ++j) {
          auto de = [&](double v) { return v * sd[static_cast<size_t>(j)] + mu[static_cast<size_t>(j)]; };
          std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                        batch[b].start, i, j, de(results[b].y_dec.at({i, j})),
                        de(results[b].z_out.at({i, j})),
                        de(results[b].fused.at({i, j})),
                        results[b].variance.at({i, j}));
          out << buf;
        }
  }
}

Metrics persistence_baseline(const data::SeriesFrame& standardized,
                             const std::vector<int>& starts,
                             const data::WindowSpec& spec) {
  Accum acc;
  for (int s : starts) {
    data::WindowSample w = data::make_window(standardized, spec, s);
    Tensor pred = Tensor::zeros(w.target.shape());
    int d_t = w.target.dim(1);
    for (int j = 0; j < d_t; ++j) {
      int col = spec.mode == data::TargetMode::Multivariate
                    ? j
                    : standardized.target_index;
      double last = w.enc_x.at({spec.L_x - 1, col});
      for (int i = 0; i < spec.L_y; ++i)
        pred.mutable_data()[static_cast<long>(i) * d_t + j] = last;
    }
    acc.add(pred, w.target);
  }
  return acc.metrics();
}

}  // namespace conformer::train
