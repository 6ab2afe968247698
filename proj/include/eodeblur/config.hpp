#pragma once

// INI-style configuration: [section] headers, key = value lines, '#' or ';'
// comments. Keys are case-sensitive; unknown sections or keys are rejected
// by the consumers that declare which keys they accept.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "eodeblur/error.hpp"

namespace eodeblur {

class IniFile {
 public:
  static IniFile parse(std::istream& in, const std::string& origin = "config") {
    IniFile ini;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(strip_comment(line));
      if (t.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3) throw FormatError(where + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        ini.sections_[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
      if (section.empty()) throw FormatError(where + ": key outside of any section");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw FormatError(where + ": empty key");
      if (!ini.sections_[section].emplace(key, trim(t.substr(eq + 1))).second)
        throw FormatError(where + ": duplicate key " + section + "." + key);
    }
    return ini;
  }

  static IniFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in, "string");
  }

  static IniFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config " + path.string());
    return parse(in, path.string());
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) != 0;
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  }

  template <class T>
  std::optional<T> get_as(const std::string& section, const std::string& key) const {
    const auto raw = get(section, key);
    if (!raw) return std::nullopt;
    return convert<T>(*raw, section + "." + key);
  }

  /// Assigns `target` when the key is present.
  template <class T>
  void read(const std::string& section, const std::string& key, T& target) const {
    if (auto v = get_as<T>(section, key)) target = *v;
  }

  /// Throws on any key of `section` not listed in `allowed`.
  void check_keys(const std::string& section, const std::set<std::string>& allowed) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return;
    for (const auto& [key, _] : s->second)
      if (!allowed.count(key)) throw FormatError("unknown config key " + section + "." + key);
  }

  void check_sections(const std::set<std::string>& allowed) const {
    for (const auto& [name, _] : sections_)
      if (!allowed.count(name)) throw FormatError("unknown config section [" + name + "]");
  }

 private:
  static std::string strip_comment(const std::string& s) {
    const auto p = s.find_first_of("#;");
    return p == std::string::npos ? s : s.substr(0, p);
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  template <class T>
  static T convert(const std::string& raw, const std::string& name) {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "on" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "off" || raw == "0" || raw == "no") return false;
      throw FormatError("config " + name + ": expected a boolean, got '" + raw + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(raw, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != raw.size() || raw.empty()) throw FormatError("config " + name + ": expected a number, got '" + raw + "'");
      return static_cast<T>(v);
    } else {
      T v{};
      const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || ptr != raw.data() + raw.size()) throw FormatError("config " + name + ": expected an integer, got '" + raw + "'");
      return v;
    }
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace eodeblur
