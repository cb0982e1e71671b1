#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace diu {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Parse errors surface as DataError carrying the file path.
nlohmann::ordered_json parse_json_file(const std::filesystem::path& path);

void append_le_f32(std::vector<uint8_t>& out, float v);
float read_le_f32(const uint8_t* p);

// Flat little-endian float32 tensors (the .f32 image / params.bin encoding).
std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);

}  // namespace diu
