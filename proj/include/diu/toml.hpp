#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace diu {

// Strict TOML subset: comments, [section] / [a.b] headers, and key = value
// lines with string, integer, float, boolean, and flat-array values. Keys are
// flattened to "section.key". Anything else is a line-numbered ConfigError —
// config typos must not parse.
struct TomlValue {
  enum class Type { Int, Float, Bool, String, Array };
  Type type = Type::Int;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::vector<TomlValue> array;

  // typed accessors; as_double accepts Int (0.75 and 1 both mean a number)
  int64_t as_int(const std::string& key) const;
  double as_double(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  std::vector<int64_t> as_int_array(const std::string& key) const;
};

class TomlTable {
 public:
  static TomlTable parse(const std::string& text);
  static TomlTable parse_file(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  const TomlValue& at(const std::string& key) const;
  const std::map<std::string, TomlValue>& entries() const { return values_; }

 private:
  std::map<std::string, TomlValue> values_;
};

}  // namespace diu
