#include "diu/toml.hpp"

#include <cctype>
#include <charconv>

#include "diu/errors.hpp"
#include "diu/fileio.hpp"

namespace diu {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  }
  return true;
}

// cut a trailing comment, respecting quoted strings
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

std::string parse_string(std::string_view body, int line) {
  // body includes the surrounding quotes
  if (body.size() < 2 || body.front() != '"' || body.back() != '"')
    fail(line, "malformed string value");
  std::string out;
  for (size_t i = 1; i + 1 < body.size(); ++i) {
    char c = body[i];
    if (c == '\\') {
      if (i + 2 >= body.size()) fail(line, "dangling escape in string");
      ++i;
      switch (body[i]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail(line, std::string("unsupported escape \\") + body[i]);
      }
    } else if (c == '"') {
      fail(line, "unescaped quote inside string");
    } else {
      out += c;
    }
  }
  return out;
}

TomlValue parse_value(std::string_view body, int line);

std::vector<std::string_view> split_top_level(std::string_view body, int line) {
  // body without the surrounding brackets
  std::vector<std::string_view> parts;
  int depth = 0;
  bool in_string = false;
  size_t start = 0;
  for (size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
    if (in_string) continue;
    if (c == '[') ++depth;
    if (c == ']') {
      --depth;
      if (depth < 0) fail(line, "unbalanced brackets in array");
    }
    if (c == ',' && depth == 0) {
      parts.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  if (in_string) fail(line, "unterminated string");
  if (depth != 0) fail(line, "unbalanced brackets in array");
  const std::string_view tail = trim(body.substr(start));
  if (!tail.empty() || !parts.empty()) parts.push_back(body.substr(start));
  // allow a single trailing comma
  if (!parts.empty() && trim(parts.back()).empty()) parts.pop_back();
  return parts;
}

TomlValue parse_value(std::string_view body, int line) {
  body = trim(body);
  if (body.empty()) fail(line, "missing value");
  TomlValue v;

  if (body.front() == '"') {
    v.type = TomlValue::Type::String;
    v.s = parse_string(body, line);
    return v;
  }
  if (body == "true" || body == "false") {
    v.type = TomlValue::Type::Bool;
    v.b = (body == "true");
    return v;
  }
  if (body.front() == '[') {
    if (body.back() != ']') fail(line, "array missing closing bracket");
    v.type = TomlValue::Type::Array;
    for (std::string_view part : split_top_level(body.substr(1, body.size() - 2), line)) {
      part = trim(part);
      if (part.empty()) fail(line, "empty array element");
      v.array.push_back(parse_value(part, line));
    }
    return v;
  }

  // numbers: prefer integer, fall back to float; both must consume everything
  {
    int64_t iv = 0;
    const auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), iv);
    if (ec == std::errc() && p == body.data() + body.size()) {
      v.type = TomlValue::Type::Int;
      v.i = iv;
      return v;
    }
  }
  {
    double fv = 0.0;
    const auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), fv);
    if (ec == std::errc() && p == body.data() + body.size()) {
      v.type = TomlValue::Type::Float;
      v.f = fv;
      return v;
    }
  }
  fail(line, "cannot parse value '" + std::string(body) + "'");
}

}  // namespace

int64_t TomlValue::as_int(const std::string& key) const {
  if (type != Type::Int) throw ConfigError("config key '" + key + "' must be an integer");
  return i;
}

double TomlValue::as_double(const std::string& key) const {
  if (type == Type::Float) return f;
  if (type == Type::Int) return static_cast<double>(i);
  throw ConfigError("config key '" + key + "' must be a number");
}

bool TomlValue::as_bool(const std::string& key) const {
  if (type != Type::Bool) throw ConfigError("config key '" + key + "' must be true or false");
  return b;
}

const std::string& TomlValue::as_string(const std::string& key) const {
  if (type != Type::String) throw ConfigError("config key '" + key + "' must be a string");
  return s;
}

std::vector<int64_t> TomlValue::as_int_array(const std::string& key) const {
  if (type != Type::Array)
    throw ConfigError("config key '" + key + "' must be an array of integers");
  std::vector<int64_t> out;
  for (const TomlValue& e : array) {
    if (e.type != Type::Int)
      throw ConfigError("config key '" + key + "' must contain only integers");
    out.push_back(e.i);
  }
  return out;
}

const TomlValue& TomlTable::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

TomlTable TomlTable::parse(const std::string& text) {
  TomlTable table;
  std::string section;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;

    line = trim(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "section header missing ']'");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) fail(line_no, "invalid section name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_key(key) || key.find('.') != std::string_view::npos)
      fail(line_no, "invalid key '" + std::string(key) + "'");

    const std::string full_key =
        section.empty() ? std::string(key) : section + "." + std::string(key);
    if (table.values_.count(full_key)) fail(line_no, "duplicate key '" + full_key + "'");
    table.values_[full_key] = parse_value(line.substr(eq + 1), line_no);
  }
  return table;
}

TomlTable TomlTable::parse_file(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

}  // namespace diu
