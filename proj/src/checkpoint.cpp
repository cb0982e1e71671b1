#include "diu/checkpoint.hpp"

#include <fstream>

#include "diu/errors.hpp"
#include "diu/fileio.hpp"

namespace diu {

using ordered_json = nlohmann::ordered_json;

std::vector<ManifestEntry> parameter_manifest(const EmbeddingNetwork& net) {
  std::vector<ManifestEntry> entries;
  size_t offset = 0;
  for (const ParamTensor* t : net.parameters()) {
    entries.push_back({t->name, t->shape, offset});
    offset += t->size() * 4;
  }
  return entries;
}

std::vector<uint8_t> serialize_params(const EmbeddingNetwork& net) {
  std::vector<uint8_t> bytes;
  bytes.reserve(net.parameter_count() * 4);
  for (const ParamTensor* t : net.parameters())
    for (float v : t->data) append_le_f32(bytes, v);
  return bytes;
}

size_t frozen_byte_offset(const EmbeddingNetwork& net, int diu_cutoff) {
  if (diu_cutoff < 0 || diu_cutoff > net.config.num_blocks) {
    throw ConfigError("diu_cutoff " + std::to_string(diu_cutoff) + " outside [0, " +
                      std::to_string(net.config.num_blocks) + "]");
  }
  size_t offset = 0;
  for (int i = 0; i < diu_cutoff; ++i) {
    offset += net.blocks[static_cast<size_t>(i)].weight.size() * 4;
    offset += net.blocks[static_cast<size_t>(i)].bias.size() * 4;
  }
  return offset;
}

ordered_json network_config_to_json(const NetworkConfig& config) {
  ordered_json j;
  j["input_height"] = config.input_height;
  j["input_width"] = config.input_width;
  j["input_channels"] = config.input_channels;
  j["num_blocks"] = config.num_blocks;
  j["channels_per_block"] = config.channels_per_block;
  j["embedding_dim"] = config.embedding_dim;
  j["seed"] = config.seed;
  return j;
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    c.input_height = j.at("input_height").get<int>();
    c.input_width = j.at("input_width").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.num_blocks = j.at("num_blocks").get<int>();
    c.channels_per_block = j.at("channels_per_block").get<std::vector<int>>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed network config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const EmbeddingNetwork& net, const std::filesystem::path& dir,
                     const ordered_json& training_meta, int diu_cutoff) {
  std::filesystem::create_directories(dir);

  ordered_json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["network"] = network_config_to_json(net.config);
  if (diu_cutoff >= 0) {
    meta["diu_cutoff"] = diu_cutoff;
  } else {
    meta["diu_cutoff"] = nullptr;
  }
  meta["training"] = training_meta;
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");

  ordered_json manifest = ordered_json::array();
  for (const ManifestEntry& e : parameter_manifest(net)) {
    manifest.push_back(
        {{"name", e.name}, {"shape", e.shape}, {"byte_offset", e.byte_offset}});
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  const std::vector<uint8_t> bytes = serialize_params(net);
  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "params.bin").string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const ordered_json meta = parse_json_file(dir / "meta.json");

  if (!meta.contains("format_version") ||
      meta.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw DataError(dir.string() + ": unsupported checkpoint format_version (expected " +
                    std::to_string(kCheckpointFormatVersion) + ")");
  }
  const NetworkConfig config = network_config_from_json(meta.at("network"));
  EmbeddingNetwork net = build_network(config);

  // manifest must agree with the network rebuilt from the stored config
  const ordered_json manifest = parse_json_file(dir / "manifest.json");
  const std::vector<ManifestEntry> expected = parameter_manifest(net);
  if (!manifest.is_array() || manifest.size() != expected.size()) {
    throw DataError(dir.string() + ": manifest entry count mismatch");
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const auto& e = manifest.at(i);
    if (e.at("name").get<std::string>() != expected[i].name ||
        e.at("shape").get<std::vector<int>>() != expected[i].shape ||
        e.at("byte_offset").get<size_t>() != expected[i].byte_offset) {
      throw DataError(dir.string() + ": manifest mismatch at parameter " +
                      expected[i].name);
    }
  }

  const std::string blob = read_text_file(dir / "params.bin");
  if (blob.size() != net.parameter_count() * 4) {
    throw DataError(dir.string() + ": params.bin holds " + std::to_string(blob.size()) +
                    " bytes, expected " + std::to_string(net.parameter_count() * 4));
  }
  const uint8_t* p = reinterpret_cast<const uint8_t*>(blob.data());
  for (ParamTensor* t : net.parameters()) {
    for (float& v : t->data) {
      v = read_le_f32(p);
      p += 4;
    }
  }
  return {std::move(net), meta};
}

}  // namespace diu
