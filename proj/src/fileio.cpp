#include "diu/fileio.hpp"

#include <bit>
#include <fstream>

#include "diu/errors.hpp"

namespace diu {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("short write to " + path.string());
}

nlohmann::ordered_json parse_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void append_le_f32(std::vector<uint8_t>& out, float v) {
  const uint32_t bits = std::bit_cast<uint32_t>(v);
  out.push_back(static_cast<uint8_t>(bits & 0xFF));
  out.push_back(static_cast<uint8_t>((bits >> 8) & 0xFF));
  out.push_back(static_cast<uint8_t>((bits >> 16) & 0xFF));
  out.push_back(static_cast<uint8_t>((bits >> 24) & 0xFF));
}

float read_le_f32(const uint8_t* p) {
  const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) |
                        (static_cast<uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const std::string blob = read_text_file(path);
  if (blob.size() % 4 != 0) {
    throw DataError(path.string() + ": size " + std::to_string(blob.size()) +
                    " is not a multiple of 4");
  }
  std::vector<float> values(blob.size() / 4);
  const uint8_t* p = reinterpret_cast<const uint8_t*>(blob.data());
  for (float& v : values) {
    v = read_le_f32(p);
    p += 4;
  }
  return values;
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) append_le_f32(bytes, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace diu
