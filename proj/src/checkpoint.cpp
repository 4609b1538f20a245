#include "conformer/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace conformer::model {

using nlohmann::json;

namespace {

std::string mode_str(data::TargetMode m) {
  return m == data::TargetMode::Multivariate ? "multivariate" : "univariate";
}
data::TargetMode mode_from(const std::string& s) {
  if (s == "multivariate") return data::TargetMode::Multivariate;
  if (s == "univariate") return data::TargetMode::Univariate;
  throw std::invalid_argument("unknown mode '" + s + "'");
}
std::string latent_str(flow::LatentLayer l) {
  return l == flow::LatentLayer::First ? "first" : "last";
}
flow::LatentLayer latent_from(const std::string& s) {
  if (s == "first") return flow::LatentLayer::First;
  if (s == "last") return flow::LatentLayer::Last;
  throw std::invalid_argument("unknown latent layer '" + s + "'");
}

}  // namespace

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["d"] = cfg.d;
  j["heads"] = cfg.heads;
  j["w"] = cfg.band_w;
  j["lambda"] = cfg.lambda;
  j["eta"] = cfg.eta;
  j["decomp-kernel"] = cfg.decomp_kernel;
  j["k-v"] = cfg.k_v;
  j["flow-transforms"] = cfg.flow_T;
  j["l-x"] = cfg.L_x;
  j["l-y"] = cfg.L_y;
  j["l-tok"] = cfg.L_tok;
  j["mode"] = mode_str(cfg.mode);
  j["input-variant"] = rep::to_string(cfg.input_variant);
  j["nf-variant"] = flow::to_string(cfg.nf_variant);
  j["latent-encoder"] = latent_str(cfg.latents.encoder);
  j["latent-decoder"] = latent_str(cfg.latents.decoder);
  j["lr"] = cfg.lr;
  j["batch"] = cfg.batch;
  j["max-epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["enc-layers"] = cfg.enc_sirn_layers;
  j["dec-layers"] = cfg.dec_sirn_layers;
  j["eval-samples"] = cfg.eval_samples;
  j["interval"] = cfg.interval_seconds;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "d") cfg.d = v.get<int>();
    else if (k == "heads") cfg.heads = v.get<int>();
    else if (k == "w") cfg.band_w = v.get<int>();
    else if (k == "lambda") cfg.lambda = v.get<double>();
    else if (k == "eta") cfg.eta = v.get<int>();
    else if (k == "decomp-kernel") cfg.decomp_kernel = v.get<int>();
    else if (k == "k-v") cfg.k_v = v.get<int>();
    else if (k == "flow-transforms") cfg.flow_T = v.get<int>();
    else if (k == "l-x") cfg.L_x = v.get<int>();
    else if (k == "l-y") cfg.L_y = v.get<int>();
    else if (k == "l-tok") cfg.L_tok = v.get<int>();
    else if (k == "mode") cfg.mode = mode_from(v.get<std::string>());
    else if (k == "input-variant") cfg.input_variant = rep::fuse_variant_from(v.get<std::string>());
    else if (k == "nf-variant") cfg.nf_variant = flow::nf_variant_from(v.get<std::string>());
    else if (k == "latent-encoder") cfg.latents.encoder = latent_from(v.get<std::string>());
    else if (k == "latent-decoder") cfg.latents.decoder = latent_from(v.get<std::string>());
    else if (k == "lr") cfg.lr = v.get<double>();
    else if (k == "batch") cfg.batch = v.get<int>();
    else if (k == "max-epochs") cfg.max_epochs = v.get<int>();
    else if (k == "patience") cfg.patience = v.get<int>();
    else if (k == "seed") cfg.seed = v.get<uint64_t>();
    else if (k == "enc-layers") cfg.enc_sirn_layers = v.get<int>();
    else if (k == "dec-layers") cfg.dec_sirn_layers = v.get<int>();
    else if (k == "eval-samples") cfg.eval_samples = v.get<int>();
    else if (k == "interval") cfg.interval_seconds = v.get<int64_t>();
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, ConformerParams& params,
                     const data::StandardizeStats& stats) {
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = config_to_json(params.cfg);
  manifest["d_x"] = params.d_x;
  std::vector<double> mean(stats.mean.data(), stats.mean.data() + stats.mean.numel());
  std::vector<double> sd(stats.std.data(), stats.std.data() + stats.std.numel());
  manifest["stats"] = {{"mean", mean}, {"std", sd}};

  json plist = json::array();
  int64_t offset = 0;
  std::vector<const num::Tensor*> order;
  params.visit([&](const std::string& name, num::Tensor& t) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    offset += t.numel();
    plist.push_back(e);
    order.push_back(&t);
  });
  manifest["params"] = plist;
  manifest["total"] = offset;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError("checkpoint: cannot open " + path);
  std::string js = manifest.dump();
  uint64_t len = js.size();
  out.write(kCheckpointMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const num::Tensor* t : order)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->numel() * 8));
  if (!out) throw data::DataError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw data::DataError("checkpoint: bad magic in " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string js(len, '\0');
  in.read(js.data(), static_cast<std::streamsize>(len));
  if (!in) throw data::DataError("checkpoint: truncated manifest");
  json manifest = json::parse(js);
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<int>() != kCheckpointVersion)
    throw data::DataError("checkpoint: unsupported format version");

  ModelConfig cfg = config_from_json(manifest["config"]);
  int d_x = manifest["d_x"].get<int>();
  LoadedCheckpoint lc{ConformerParams::init(cfg, d_x), {}};

  auto mean = manifest["stats"]["mean"].get<std::vector<double>>();
  auto sd = manifest["stats"]["std"].get<std::vector<double>>();
  lc.stats.mean = num::Tensor::from({static_cast<int>(mean.size())}, mean);
  lc.stats.std = num::Tensor::from({static_cast<int>(sd.size())}, sd);

  int64_t total = manifest["total"].get<int64_t>();
  std::vector<double> blob(static_cast<size_t>(total));
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(total * 8));
  if (!in) throw data::DataError("checkpoint: truncated parameter blob");

  size_t idx = 0;
  const json& plist = manifest["params"];
  lc.params.visit([&](const std::string& name, num::Tensor& t) {
    if (idx >= plist.size())
      throw data::DataError("checkpoint: parameter table too short");
    const json& e = plist[idx];
    if (e["name"].get<std::string>() != name)
      throw data::DataError("checkpoint: parameter order mismatch at " + name);
    auto shape = e["shape"].get<num::Shape>();
    if (shape != t.shape())
      throw data::DataError("checkpoint: shape mismatch for " + name);
    int64_t off = e["offset"].get<int64_t>();
    double* dst = t.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = blob[static_cast<size_t>(off + i)];
    ++idx;
  });
  if (idx != plist.size())
    throw data::DataError("checkpoint: parameter table too long");
  return lc;
}

}  // namespace conformer::model
