#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diu/backbone.hpp"

namespace diu {

inline constexpr int kCheckpointFormatVersion = 1;

struct ManifestEntry {
  std::string name;
  std::vector<int> shape;
  size_t byte_offset = 0;
};

// Entries follow the canonical parameter order; offsets are cumulative.
std::vector<ManifestEntry> parameter_manifest(const EmbeddingNetwork& net);

// Little-endian float32 bytes, parameters concatenated in canonical order.
// Because trainable blocks come first, the frozen partition is always a
// contiguous byte suffix of this buffer.
std::vector<uint8_t> serialize_params(const EmbeddingNetwork& net);

// Byte offset where the frozen suffix starts for a given diu cutoff.
size_t frozen_byte_offset(const EmbeddingNetwork& net, int diu_cutoff);

nlohmann::ordered_json network_config_to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// Writes meta.json, params.bin, manifest.json into dir (created if needed).
// diu_cutoff < 0 means "not a student" and is stored as null.
void save_checkpoint(const EmbeddingNetwork& net, const std::filesystem::path& dir,
                     const nlohmann::ordered_json& training_meta, int diu_cutoff = -1);

struct LoadedCheckpoint {
  EmbeddingNetwork net;
  nlohmann::ordered_json meta;  // parsed meta.json
};

// Fails loudly (DataError) on missing files, version mismatch, or any
// manifest/shape disagreement with the rebuilt network.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace diu
