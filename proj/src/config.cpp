#include "cpsets/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cps {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

IniConfig IniConfig::parse_string(const std::string& text) {
  IniConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config: unterminated section at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key at line " + std::to_string(line_no));
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

IniConfig IniConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_string(text);
}

bool IniConfig::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string IniConfig::get_str(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end() || !it->second.count(key))
    throw std::runtime_error("config: missing [" + section + "] " + key);
  return it->second.at(key);
}

std::string IniConfig::get_str(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return has(section, key) ? get_str(section, key) : fallback;
}

double IniConfig::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get_str(section, key);
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("config: [" + section + "] " + key + " is not a number: " + v);
  return out;
}

double IniConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long IniConfig::get_long(const std::string& section, const std::string& key) const {
  const std::string v = get_str(section, key);
  long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("config: [" + section + "] " + key + " is not an integer: " + v);
  return out;
}

long IniConfig::get_long(const std::string& section, const std::string& key,
                         long fallback) const {
  return has(section, key) ? get_long(section, key) : fallback;
}

std::vector<std::string> IniConfig::get_list(const std::string& section,
                                             const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get_str(section, key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<double> IniConfig::get_double_list(const std::string& section,
                                               const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : get_list(section, key)) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end)
      throw std::runtime_error("config: [" + section + "] " + key + " has a bad entry: " + tok);
    out.push_back(v);
  }
  return out;
}

void IniConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  sections_[section][key] = value;
}

std::string IniConfig::dump() const {
  std::ostringstream out;
  for (const auto& [section, kv] : sections_) {
    out << "[" << section << "]\n";
    for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
    out << "\n";
  }
  return out.str();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cps
