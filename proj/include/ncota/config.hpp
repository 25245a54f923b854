#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ncota/core.hpp"

namespace ncota {

/// Sectioned key = value text. '#' and ';' start comments; keys before any
/// section header belong to section "experiment".
class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static Config parse(std::istream& in, const std::string& source = "config") {
    Config cfg;
    cfg.source_ = source;
    std::string section = "experiment";
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw cfg.error(line_no, "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw cfg.error(line_no, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw cfg.error(line_no, "expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw cfg.error(line_no, "missing key");
      auto& sec = cfg.data_[section];
      if (sec.count(key)) throw cfg.error(line_no, "duplicate key '" + key + "' in [" + section + "]");
      sec[key] = {value, line_no};
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  std::string serialize() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [section, entries] : data_) {
      if (!first) out << '\n';
      first = false;
      out << '[' << section << "]\n";
      for (const auto& [key, entry] : entries) out << key << " = " << entry.value << '\n';
    }
    return out.str();
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    auto& e = data_[section][key];
    e.value = value;
  }

  /// "section.key" form used by sweeps and overrides.
  void set_path(const std::string& path, const std::string& value) {
    const auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) throw Error("parameter must be written as section.key, got '" + path + "'");
    set(path.substr(0, dot), path.substr(dot + 1), value);
  }

  std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
  }

  double number(const std::string& section, const std::string& key, double fallback) const {
    const Entry* e = find(section, key);
    return e ? to_number(*e, section, key) : fallback;
  }

  long long integer(const std::string& section, const std::string& key, long long fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    long long v = 0;
    const auto* end = e->value.data() + e->value.size();
    const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      const double d = to_number(*e, section, key);
      if (d != std::floor(d) || std::abs(d) > 9e18) throw error(e->line, "[" + section + "] " + key + ": expected an integer, got '" + e->value + "'");
      return static_cast<long long>(d);
    }
    return v;
  }

  bool flag(const std::string& section, const std::string& key, bool fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "yes" || e->value == "on" || e->value == "1") return true;
    if (e->value == "false" || e->value == "no" || e->value == "off" || e->value == "0") return false;
    throw error(e->line, "[" + section + "] " + key + ": expected true or false, got '" + e->value + "'");
  }

  /// Rejects a value not in `allowed`.
  std::string choice(const std::string& section, const std::string& key, const std::vector<std::string>& allowed,
                     const std::string& fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    for (const auto& a : allowed)
      if (a == e->value) return a;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw error(e->line, "[" + section + "] " + key + ": '" + e->value + "' is not one of " + list);
  }

  /// Schema check: every section and key must be known.
  void check_keys(const std::map<std::string, std::vector<std::string>>& schema) const {
    for (const auto& [section, entries] : data_) {
      const auto s = schema.find(section);
      for (const auto& [key, entry] : entries) {
        if (s == schema.end()) throw error(entry.line, "unknown section [" + section + "]");
        bool known = false;
        for (const auto& k : s->second) known = known || k == key;
        if (!known) throw error(entry.line, "unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  /// Error tagged with the key's line, for semantic checks after parsing.
  Error error_at(const std::string& section, const std::string& key, const std::string& what) const {
    const Entry* e = find(section, key);
    return error(e ? e->line : 0, "[" + section + "] " + key + ": " + what);
  }

  const std::map<std::string, std::map<std::string, Entry>>& sections() const noexcept { return data_; }
  const std::string& source() const noexcept { return source_; }

 private:
  const Entry* find(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    if (s == data_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  double to_number(const Entry& e, const std::string& section, const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(e.value, &used);
      if (used == e.value.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw error(e.line, "[" + section + "] " + key + ": expected a number, got '" + e.value + "'");
  }

  Error error(int line, const std::string& what) const {
    return Error(source_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what);
  }

  static std::string strip_comment(const std::string& s) {
    const auto pos = s.find_first_of("#;");
    return pos == std::string::npos ? s : s.substr(0, pos);
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::string source_ = "config";
  std::map<std::string, std::map<std::string, Entry>> data_;
};

}  // namespace ncota
