#include <cctype>
#include <charconv>
#include <string>

#include "hamopt/error.hpp"
#include "hamopt/io.hpp"
#include "json.hpp"

namespace hamopt {

namespace {

[[noreturn]] void bad(std::size_t line, const std::string& why) {
  throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line) + ": " + why);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_key(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

// Strips a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

std::string parse_basic_string(std::string_view s, std::size_t line) {
  std::string out;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"') {
      if (!trim(s.substr(i + 1)).empty()) bad(line, "trailing characters after string");
      return out;
    }
    if (c != '\\') {
      out += c;
      continue;
    }
    if (++i >= s.size()) break;
    switch (s[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      case '"': out += '"'; break;
      default: bad(line, "unsupported escape sequence");
    }
  }
  bad(line, "unterminated string");
}

ConfigValue parse_value(std::string_view s, std::size_t line) {
  if (s.empty()) bad(line, "missing value");
  if (s.front() == '"') return parse_basic_string(s, line);
  if (s.front() == '\'') {
    const auto end = s.find('\'', 1);
    if (end == std::string_view::npos || !trim(s.substr(end + 1)).empty()) bad(line, "malformed literal string");
    return std::string(s.substr(1, end - 1));
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::string digits;
  for (char c : s) {
    if (c != '_') digits += c;
  }
  const bool is_float = digits.find_first_of(".eE") != std::string::npos;
  const char* first = digits.data();
  const char* last = digits.data() + digits.size();
  if (!digits.empty() && digits.front() == '+') ++first;
  if (is_float) {
    double v = 0.0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec == std::errc() && r.ptr == last) return v;
  } else {
    std::int64_t v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec == std::errc() && r.ptr == last) return v;
  }
  bad(line, "unsupported value '" + std::string(s) + "'");
}

void flatten_json(const nlohmann::json& node, const std::string& prefix, ConfigMap& out) {
  for (const auto& item : node.items()) {
    const std::string key = prefix.empty() ? item.key() : prefix + "." + item.key();
    const auto& v = item.value();
    if (v.is_object()) flatten_json(v, key, out);
    else if (v.is_boolean()) out[key] = v.get<bool>();
    else if (v.is_number_integer()) out[key] = v.get<std::int64_t>();
    else if (v.is_number_float()) out[key] = v.get<double>();
    else if (v.is_string()) out[key] = v.get<std::string>();
    else throw Error(ErrorKind::InvalidConfig, "unsupported value for '" + key + "'");
  }
}

}  // namespace

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  if (!trim(text).empty() && trim(text).front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, std::string("malformed JSON config: ") + e.what());
    }
    flatten_json(doc, "", out);
    return out;
  }

  std::string table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3 || line[1] == '[') bad(line_no, "malformed table header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!bare_key(name)) bad(line_no, "unsupported table name");
      table = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (!bare_key(key)) bad(line_no, "unsupported key '" + std::string(key) + "'");
    const std::string full = table.empty() ? std::string(key) : table + "." + std::string(key);
    if (out.count(full)) bad(line_no, "duplicate key '" + full + "'");
    out[full] = parse_value(trim(line.substr(eq + 1)), line_no);
  }
  return out;
}

ConfigMap read_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidConfig) throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
    throw;
  }
}

}  // namespace hamopt
