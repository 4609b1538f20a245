#include "conformer/config.hpp"

#include <fstream>

namespace conformer::cli {

using nlohmann::json;

void apply_config_json(RunConfig& rc, const json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  json model_keys = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "data") rc.data = v.get<std::string>();
    else if (k == "target") rc.target = v.get<std::string>();
    else if (k == "out-dir") rc.out_dir = v.get<std::string>();
    else if (k == "checkpoint") rc.checkpoint = v.get<std::string>();
    else if (k == "split") {
      auto f = v.get<std::vector<double>>();
      if (f.size() != 3) throw UsageError("config: split needs three fractions");
      rc.split_train = f[0];
      rc.split_val = f[1];
      rc.split_test = f[2];
    } else if (k == "split-months") {
      rc.split_months = v.get<std::vector<int>>();
      if (rc.split_months.size() != 3)
        throw UsageError("config: split-months needs three month counts");
    } else if (k == "eval-split") rc.eval_split = v.get<std::string>();
    else if (k == "eval-dump") rc.eval_dump = v.get<std::string>();
    else if (k == "n-samples") rc.n_samples = v.get<int>();
    else if (k == "predict-stride") rc.predict_stride = v.get<int>();
    else if (k == "synth-l") rc.synth.L = v.get<int>();
    else if (k == "synth-dx") rc.synth.d_x = v.get<int>();
    else if (k == "synth-periods") rc.synth.periods = v.get<std::vector<double>>();
    else if (k == "synth-trend") rc.synth.trend_slope = v.get<double>();
    else if (k == "synth-noise") rc.synth.noise_std = v.get<double>();
    else if (k == "bench-lengths") rc.bench.lengths = v.get<std::vector<int>>();
    else if (k == "bench-trials") rc.bench.trials = v.get<int>();
    else if (k == "bench-warmup") rc.bench.warmup = v.get<int>();
    else if (k == "bench-w") rc.bench.band_w = v.get<int>();
    else if (k == "bench-d") rc.bench.d = v.get<int>();
    else if (k == "bench-heads") rc.bench.heads = v.get<int>();
    else model_keys[k] = v;  // remaining keys must be model configuration
  }
  if (!model_keys.empty()) {
    // merge onto current model config: serialize, overwrite, parse back
    json merged = model::config_to_json(rc.model);
    for (auto it = model_keys.begin(); it != model_keys.end(); ++it)
      merged[it.key()] = it.value();
    try {
      rc.model = model::config_from_json(merged);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
}

RunConfig parse_config_file(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return rc;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  apply_config_json(rc, j);
  return rc;
}

data::SplitRanges resolve_split(const RunConfig& rc, const data::SeriesFrame& f) {
  if (!rc.split_months.empty())
    return data::split_months(f, rc.split_months[0], rc.split_months[1],
                              rc.split_months[2]);
  return data::split_fractions(f.length(), rc.split_train, rc.split_val,
                               rc.split_test);
}

}  // namespace conformer::cli
