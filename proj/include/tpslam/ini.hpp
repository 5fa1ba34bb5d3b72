#pragma once

// Minimal "key = value" text format with [sections]. Sections may repeat
// (one per scene primitive), so order is preserved.

#include "tpslam/common.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tpslam {

struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return &v;
    }
    return nullptr;
  }
  bool has(const std::string& key) const { return find(key) != nullptr; }
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct IniDocument {
  std::vector<IniSection> sections;

  static IniDocument parse(std::istream& is, const std::string& source = "config") {
    IniDocument doc;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          throw ConfigError(source, "line " + std::to_string(lineno) + ": malformed section header");
        }
        doc.sections.push_back({trim(line.substr(1, line.size() - 2)), {}});
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(source, "line " + std::to_string(lineno) + ": expected key = value");
      }
      if (doc.sections.empty()) doc.sections.push_back({"", {}});
      const std::string key = trim(line.substr(0, eq));
      if (doc.sections.back().has(key)) {
        throw ConfigError(doc.sections.back().name + "." + key, "duplicate key");
      }
      doc.sections.back().entries.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return doc;
  }

  static IniDocument parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream is(text);
    return parse(is, source);
  }

  static IniDocument load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config", "cannot open " + path);
    return parse(is, path);
  }

  /// First section with the given name.
  const IniSection* section(const std::string& name) const {
    for (const auto& s : sections) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

/// Typed accessors that report the failing "section.key" on error.
class IniReader {
 public:
  IniReader(const IniSection* section, std::string name)
      : section_(section), name_(std::move(name)) {}

  bool has(const std::string& key) const { return section_ && section_->has(key); }
  std::string field(const std::string& key) const { return name_ + "." + key; }

  std::optional<std::string> raw(const std::string& key) const {
    if (!section_) return std::nullopt;
    if (const auto* v = section_->find(key)) return *v;
    return std::nullopt;
  }

  std::string require(const std::string& key) const {
    auto v = raw(key);
    if (!v) throw ConfigError(field(key), "missing");
    return *v;
  }

  double number(const std::string& key, double fallback) const {
    auto v = raw(key);
    return v ? parse_double(key, *v) : fallback;
  }
  double number(const std::string& key) const { return parse_double(key, require(key)); }

  long long integer(const std::string& key, long long fallback) const {
    auto v = raw(key);
    return v ? parse_int(key, *v) : fallback;
  }
  long long integer(const std::string& key) const { return parse_int(key, require(key)); }

  bool boolean(const std::string& key, bool fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError(field(key), "expected a boolean, got '" + *v + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto v = raw(key);
    return v ? *v : fallback;
  }

  std::vector<double> numbers(const std::string& key, std::size_t count) const {
    return split_numbers(key, require(key), count);
  }
  std::vector<double> numbers(const std::string& key, std::size_t count,
                              const std::vector<double>& fallback) const {
    auto v = raw(key);
    return v ? split_numbers(key, *v, count) : fallback;
  }

  /// Keys present in the section but not in `known`.
  void reject_unknown(std::initializer_list<const char*> known) const {
    if (!section_) return;
    for (const auto& [k, v] : section_->entries) {
      bool ok = false;
      for (const char* n : known) ok = ok || k == n;
      if (!ok) throw ConfigError(field(k), "unknown key");
    }
  }

 private:
  double parse_double(const std::string& key, const std::string& s) const {
    double out = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(field(key), "expected a number, got '" + s + "'");
    }
    return out;
  }
  long long parse_int(const std::string& key, const std::string& s) const {
    long long out = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(field(key), "expected an integer, got '" + s + "'");
    }
    return out;
  }
  std::vector<double> split_numbers(const std::string& key, const std::string& s,
                                    std::size_t count) const {
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
      if (!tok.empty() && tok.back() == ',') tok.pop_back();
      if (!tok.empty()) out.push_back(parse_double(key, tok));
    }
    if (out.size() != count) {
      throw ConfigError(field(key), "expected " + std::to_string(count) + " numbers");
    }
    return out;
  }

  const IniSection* section_;
  std::string name_;
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace tpslam
