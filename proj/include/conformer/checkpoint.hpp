#pragma once

#include <string>

#include "json.hpp"

#include "conformer/model.hpp"

namespace conformer::model {

// Single-file checkpoint: 8-byte magic, u64 JSON length, JSON manifest
// (format version, config, standardization stats, named parameter table
// with shapes and offsets), then one little-endian f64 blob.
inline constexpr char kCheckpointMagic[8] = {'C', 'F', 'M', 'R',
                                             'C', 'K', 'P', '1'};
inline constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, ConformerParams& params,
                     const data::StandardizeStats& stats);

struct LoadedCheckpoint {
  ConformerParams params;
  data::StandardizeStats stats;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace conformer::model
