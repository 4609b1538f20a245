#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"

#include "conformer/config.hpp"
#include "conformer/train.hpp"

namespace {

using namespace conformer;

std::string g_stage = "conformer";

struct Flags {
  std::string config_path;
  cli::RunConfig rc;
};

void add_model_flags(CLI::App* cmd, cli::RunConfig& rc) {
  auto& m = rc.model;
  cmd->add_option("--d", m.d, "model width");
  cmd->add_option("--heads", m.heads, "attention heads");
  cmd->add_option("--w", m.band_w, "sliding-window attention span");
  cmd->add_option("--lambda", m.lambda, "decoder/flow loss trade-off");
  cmd->add_option("--eta", m.eta, "distillation depth");
  cmd->add_option("--decomp-kernel", m.decomp_kernel, "moving-average kernel");
  cmd->add_option("--k-v", m.k_v, "fusion conv kernel");
  cmd->add_option("--flow-transforms", m.flow_T, "flow chain length");
  cmd->add_option("--l-x", m.L_x, "input window length");
  cmd->add_option("--l-y", m.L_y, "forecast horizon");
  cmd->add_option("--l-tok", m.L_tok, "decoder start-token length");
  cmd->add_option("--lr", m.lr, "learning rate");
  cmd->add_option("--batch", m.batch, "batch size");
  cmd->add_option("--max-epochs", m.max_epochs, "epoch budget");
  cmd->add_option("--patience", m.patience, "early-stopping patience");
  cmd->add_option("--seed", m.seed, "run seed");
  cmd->add_option("--enc-layers", m.enc_sirn_layers, "encoder SIRN layers");
  cmd->add_option("--dec-layers", m.dec_sirn_layers, "decoder SIRN layers");
  cmd->add_option("--eval-samples", m.eval_samples, "flow draws at evaluation");
  cmd->add_option("--interval", m.interval_seconds, "sampling interval seconds");
  cmd->add_option_function<std::string>(
      "--mode",
      [&m](const std::string& s) {
        if (s == "multivariate") m.mode = data::TargetMode::Multivariate;
        else if (s == "univariate") m.mode = data::TargetMode::Univariate;
        else throw CLI::ValidationError("--mode", "multivariate or univariate");
      },
      "multivariate | univariate");
  cmd->add_option_function<std::string>(
      "--input-variant",
      [&m](const std::string& s) { m.input_variant = rep::fuse_variant_from(s); },
      "input representation variant");
  cmd->add_option_function<std::string>(
      "--nf-variant",
      [&m](const std::string& s) { m.nf_variant = flow::nf_variant_from(s); },
      "flow variant: full | z-e | z-d | z-0 | off");
  cmd->add_option_function<std::string>(
      "--latent-encoder",
      [&m](const std::string& s) {
        m.latents.encoder = s == "first" ? flow::LatentLayer::First
                                         : flow::LatentLayer::Last;
      },
      "encoder latent layer: first | last");
  cmd->add_option_function<std::string>(
      "--latent-decoder",
      [&m](const std::string& s) {
        m.latents.decoder = s == "first" ? flow::LatentLayer::First
                                         : flow::LatentLayer::Last;
      },
      "decoder latent layer: first | last");
}

// defaults <- config file <- CONFORMER_SEED <- explicit flags (flags win by
// being parsed directly into rc after the file is loaded)
void load_config_file(const std::string& path, cli::RunConfig& rc,
                      CLI::App* cmd) {
  cli::RunConfig from_file = cli::parse_config_file(path);
  // flags were already parsed into rc; replay file values only for options
  // the user did not pass
  cli::RunConfig merged = from_file;
  auto keep = [&](const char* flag) {
    const CLI::Option* o = cmd->get_option_no_throw(flag);
    return o != nullptr && o->count() > 0;
  };
  auto& m = merged.model;
  auto& f = rc.model;
  if (keep("--d")) m.d = f.d;
  if (keep("--heads")) m.heads = f.heads;
  if (keep("--w")) m.band_w = f.band_w;
  if (keep("--lambda")) m.lambda = f.lambda;
  if (keep("--eta")) m.eta = f.eta;
  if (keep("--decomp-kernel")) m.decomp_kernel = f.decomp_kernel;
  if (keep("--k-v")) m.k_v = f.k_v;
  if (keep("--flow-transforms")) m.flow_T = f.flow_T;
  if (keep("--l-x")) m.L_x = f.L_x;
  if (keep("--l-y")) m.L_y = f.L_y;
  if (keep("--l-tok")) m.L_tok = f.L_tok;
  if (keep("--lr")) m.lr = f.lr;
  if (keep("--batch")) m.batch = f.batch;
  if (keep("--max-epochs")) m.max_epochs = f.max_epochs;
  if (keep("--patience")) m.patience = f.patience;
  if (keep("--enc-layers")) m.enc_sirn_layers = f.enc_sirn_layers;
  if (keep("--dec-layers")) m.dec_sirn_layers = f.dec_sirn_layers;
  if (keep("--eval-samples")) m.eval_samples = f.eval_samples;
  if (keep("--interval")) m.interval_seconds = f.interval_seconds;
  if (keep("--mode")) m.mode = f.mode;
  if (keep("--input-variant")) m.input_variant = f.input_variant;
  if (keep("--nf-variant")) m.nf_variant = f.nf_variant;
  if (keep("--latent-encoder")) m.latents.encoder = f.latents.encoder;
  if (keep("--latent-decoder")) m.latents.decoder = f.latents.decoder;
  // seed priority: flag > env > file
  if (keep("--seed")) {
    m.seed = f.seed;
  } else if (const char* env = std::getenv("CONFORMER_SEED")) {
    m.seed = std::strtoull(env, nullptr, 10);
  }
  if (keep("--data")) merged.data = rc.data;
  if (keep("--target")) merged.target = rc.target;
  if (keep("--out-dir")) merged.out_dir = rc.out_dir;
  if (keep("--checkpoint")) merged.checkpoint = rc.checkpoint;
  if (keep("--split")) {
    merged.split_train = rc.split_train;
    merged.split_val = rc.split_val;
    merged.split_test = rc.split_test;
  }
  if (keep("--split-months")) merged.split_months = rc.split_months;
  if (keep("--eval-split")) merged.eval_split = rc.eval_split;
  if (keep("--eval-dump")) merged.eval_dump = rc.eval_dump;
  if (keep("--n-samples")) merged.n_samples = rc.n_samples;
  if (keep("--stride")) merged.predict_stride = rc.predict_stride;
  if (keep("--L")) merged.synth.L = rc.synth.L;
  if (keep("--dx")) merged.synth.d_x = rc.synth.d_x;
  if (keep("--periods")) merged.synth.periods = rc.synth.periods;
  if (keep("--trend")) merged.synth.trend_slope = rc.synth.trend_slope;
  if (keep("--noise")) merged.synth.noise_std = rc.synth.noise_std;
  if (keep("--lengths")) merged.bench.lengths = rc.bench.lengths;
  if (keep("--trials")) merged.bench.trials = rc.bench.trials;
  if (keep("--warmup")) merged.bench.warmup = rc.bench.warmup;
  if (keep("--bench-w")) merged.bench.band_w = rc.bench.band_w;
  if (keep("--bench-d")) merged.bench.d = rc.bench.d;
  if (keep("--bench-heads")) merged.bench.heads = rc.bench.heads;
  rc = merged;
}

data::SeriesFrame load_frame(const cli::RunConfig& rc) {
  if (rc.data.empty()) throw cli::UsageError("missing --data CSV path");
  if (rc.target.empty()) throw cli::UsageError("missing --target variable name");
  return data::load_csv(rc.data, rc.target, rc.model.interval_seconds);
}

std::vector<int> split_windows(const cli::RunConfig& rc,
                               const data::SeriesFrame& frame,
                               const data::SplitRanges& split) {
  data::WindowSpec spec = rc.model.window_spec();
  if (rc.eval_split == "train")
    return data::windows_in_range(frame, spec, 0, split.train_end);
  if (rc.eval_split == "val")
    return data::windows_in_range(frame, spec, split.train_end, split.val_end);
  if (rc.eval_split == "test")
    return data::windows_in_range(frame, spec, split.val_end, frame.length());
  throw cli::UsageError("eval split must be train, val or test");
}

int run(int argc, char** argv) {
  CLI::App app{"long-term time-series forecasting toolkit"};
  app.require_subcommand(1);

  cli::RunConfig rc;
  std::string config_path;

  auto* synth = app.add_subcommand("synth", "generate a synthetic CSV");
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* predict = app.add_subcommand("predict", "roll forecasts over a CSV");
  auto* bench_cmd = app.add_subcommand("bench", "attention scaling benchmark");

  for (CLI::App* cmd : {synth, train_cmd, eval_cmd, predict, bench_cmd}) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out-dir", rc.out_dir, "output directory");
    add_model_flags(cmd, rc);
  }
  for (CLI::App* cmd : {train_cmd, eval_cmd, predict}) {
    cmd->add_option("--data", rc.data, "input CSV path");
    cmd->add_option("--target", rc.target, "target variable name");
    cmd->add_option("--split", [&rc](const std::vector<std::string>& vals) {
      if (vals.size() != 3) return false;
      rc.split_train = std::stod(vals[0]);
      rc.split_val = std::stod(vals[1]);
      rc.split_test = std::stod(vals[2]);
      return true;
    }, "train/val/test fractions")->expected(3);
    cmd->add_option("--split-months", rc.split_months, "months per split")
        ->expected(3);
  }
  for (CLI::App* cmd : {eval_cmd, predict})
    cmd->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
  eval_cmd->add_option("--eval-split", rc.eval_split, "train | val | test");
  eval_cmd->add_option("--eval-dump", rc.eval_dump, "per-point dump CSV");
  eval_cmd->add_option("--n-samples", rc.n_samples, "flow draws");
  predict->add_option("--n-samples", rc.n_samples, "flow draws");
  predict->add_option("--stride", rc.predict_stride, "window stride");
  synth->add_option("--L", rc.synth.L, "series length");
  synth->add_option("--dx", rc.synth.d_x, "variable count");
  synth->add_option("--periods", rc.synth.periods, "per-variable periods");
  synth->add_option("--trend", rc.synth.trend_slope, "linear trend slope");
  synth->add_option("--noise", rc.synth.noise_std, "gaussian noise std");
  bench_cmd->add_option("--lengths", rc.bench.lengths, "sequence lengths");
  bench_cmd->add_option("--trials", rc.bench.trials, "timed trials per point");
  bench_cmd->add_option("--warmup", rc.bench.warmup, "untimed warmup runs");
  bench_cmd->add_option("--bench-w", rc.bench.band_w, "band span");
  bench_cmd->add_option("--bench-d", rc.bench.d, "model width");
  bench_cmd->add_option("--bench-heads", rc.bench.heads, "heads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "usage: %s\n", e.what());
    return 1;
  }

  CLI::App* active = app.get_subcommands().front();
  g_stage = active->get_name();
  load_config_file(config_path, rc, active);
  rc.synth.seed = rc.model.seed;
  rc.bench.seed = rc.model.seed;
  std::string out = rc.out_dir.empty() ? "." : rc.out_dir;

  if (active == synth) {
    rc.model.validate();
    data::SeriesFrame frame = data::synth_generate(rc.synth);
    data::save_csv(frame, out + "/synth.csv");
    std::printf("synth: wrote %d rows x %d variables to %s/synth.csv\n",
                frame.length(), frame.dims(), out.c_str());
    return 0;
  }
  if (active == train_cmd) {
    rc.model.validate();
    data::SeriesFrame frame = load_frame(rc);
    if (data::window_count(frame.length(), rc.model.L_x, rc.model.L_y) < 1)
      throw data::DataError("series too short");
    data::SplitRanges split = cli::resolve_split(rc, frame);
    train::TrainResult res = train::train_model(frame, rc.model, split);
    model::save_checkpoint(out + "/model.ckpt", res.params, res.stats);
    train::write_history_csv(res.history, out + "/history.csv");
    std::printf("train: best epoch %d, val mse %.6f; checkpoint at %s/model.ckpt\n",
                res.best_epoch,
                res.history[static_cast<size_t>(res.best_epoch - 1)].val_mse,
                out.c_str());
    return 0;
  }
  if (active == eval_cmd) {
    if (rc.checkpoint.empty()) throw cli::UsageError("missing --checkpoint");
    model::LoadedCheckpoint ck = model::load_checkpoint(rc.checkpoint);
    rc.model = ck.params.cfg;
    data::SeriesFrame frame = load_frame(rc);
    data::SplitRanges split = cli::resolve_split(rc, frame);
    data::SeriesFrame std_frame = data::standardize(frame, ck.stats);
    std::vector<int> starts = split_windows(rc, std_frame, split);
    if (starts.empty()) throw data::DataError("eval: empty split");
    int n = ck.params.cfg.eval_samples;
    train::EvalReport rep =
        train::evaluate(ck.params, std_frame, starts, n, ck.params.cfg.seed);
    train::write_metrics_csv(rep, out + "/metrics.csv");
    if (!rc.eval_dump.empty())
      train::evaluate_dump(ck.params, std_frame, starts, n, ck.params.cfg.seed,
                           rc.eval_dump);
    std::printf("eval: %d windows  dec mse %.6f mae %.6f | flow mse %.6f mae %.6f | fused mse %.6f mae %.6f\n",
                rep.windows, rep.dec.mse, rep.dec.mae, rep.flow.mse,
                rep.flow.mae, rep.fused.mse, rep.fused.mae);
    return 0;
  }
  if (active == predict) {
    if (rc.checkpoint.empty()) throw cli::UsageError("missing --checkpoint");
    model::LoadedCheckpoint ck = model::load_checkpoint(rc.checkpoint);
    rc.model = ck.params.cfg;
    data::SeriesFrame frame = load_frame(rc);
    train::predict_csv(ck.params, ck.stats, frame, rc.predict_stride,
                       rc.n_samples, ck.params.cfg.seed,
                       out + "/forecast.csv");
    std::printf("predict: wrote %s/forecast.csv\n", out.c_str());
    return 0;
  }
  if (active == bench_cmd) {
    auto rows = bench::bench_attention(rc.bench);
    bench::write_bench_csv(rows, out + "/bench.csv");
    for (const auto& r : rows)
      std::printf("bench: L=%d %s mean %.3f ms peak %lld bytes\n", r.L,
                  r.variant.c_str(), r.mean_ms,
                  static_cast<long long>(r.peak_bytes));
    return 0;
  }
  throw cli::UsageError("unknown command");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cli::UsageError& e) {
    std::fprintf(stderr, "%s: %s\n", g_stage.c_str(), e.what());
    return 1;
  } catch (const data::DataError& e) {
    std::fprintf(stderr, "%s: %s\n", g_stage.c_str(), e.what());
    return 2;
  } catch (const num::NumericError& e) {
    std::fprintf(stderr, "%s: %s\n", g_stage.c_str(), e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "%s: %s\n", g_stage.c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", g_stage.c_str(), e.what());
    return 1;
  }
}
