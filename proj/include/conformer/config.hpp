#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "conformer/bench.hpp"
#include "conformer/checkpoint.hpp"
#include "conformer/dataio.hpp"

namespace conformer::cli {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Superset of the model configuration plus data, split and command options.
struct RunConfig {
  model::ModelConfig model;

  std::string data;    // input CSV
  std::string target;  // target variable name
  std::string out_dir = ".";
  std::string checkpoint;  // for eval/predict

  // chronological split, fractions by default or whole months when set
  double split_train = 0.7, split_val = 0.1, split_test = 0.2;
  std::vector<int> split_months;  // {train, val, test} months when non-empty

  data::SynthSpec synth;

  std::string eval_split = "test";
  std::string eval_dump;  // optional per-point CSV
  int n_samples = 100;    // predict-time flow draws
  int predict_stride = -1;

  bench::BenchConfig bench;
};

// JSON file (all keys optional, unknown keys rejected) -> RunConfig
RunConfig parse_config_file(const std::string& path);
void apply_config_json(RunConfig& rc, const nlohmann::json& j);

// resolve the configured split against a loaded frame
data::SplitRanges resolve_split(const RunConfig& rc, const data::SeriesFrame& f);

}  // namespace conformer::cli
