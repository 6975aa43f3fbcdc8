#pragma once

// Plain-text key/value configuration shared by every module:
//
//   # comment
//   sim.base_demand = 800
//   guardian.max_price = 150
//
// Structs opt in by providing a visit_fields(cfg, visitor) overload that
// names each field; parsing, dumping and CLI flag generation are driven by it.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chimera/errors.hpp"

namespace chimera::config {

class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in);
  static KeyValueFile load(const std::filesystem::path& path);

  void set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, std::string> entries_;
};

void parse_value(std::string_view text, double& out);
void parse_value(std::string_view text, int& out);
void parse_value(std::string_view text, std::uint64_t& out);
void parse_value(std::string_view text, bool& out);
std::string format_value(double v);
std::string format_value(int v);
std::string format_value(std::uint64_t v);
std::string format_value(bool v);

namespace detail {

template <class T>
concept HasParse = requires(std::string_view s, T& t) { parse_value(s, t); };

struct Assigner {
  std::string_view key;
  std::string_view text;
  bool matched = false;

  template <class T>
  void operator()(std::string_view name, T& field) {
    if (name != key) return;
    parse_value(text, field);
    matched = true;
  }
};

struct Collector {
  std::string prefix;
  std::vector<std::pair<std::string, std::string>>* out;

  template <class T>
  void operator()(std::string_view name, T& field) {
    out->emplace_back(prefix + std::string(name), format_value(field));
  }
};

struct NameCollector {
  std::vector<std::string>* out;

  template <class T>
  void operator()(std::string_view name, T&) {
    out->emplace_back(name);
  }
};

}  // namespace detail

/// Assigns one field by bare name; returns false when the struct has no such field.
template <class Cfg>
bool assign(Cfg& cfg, std::string_view name, std::string_view text) {
  detail::Assigner a{name, text};
  visit_fields(cfg, a);
  return a.matched;
}

/// Applies every entry under `prefix.` to cfg. Unknown keys under the prefix throw.
template <class Cfg>
void apply(const KeyValueFile& file, std::string_view prefix, Cfg& cfg) {
  const std::string p = std::string(prefix) + ".";
  for (const auto& [key, value] : file.entries()) {
    if (key.rfind(p, 0) != 0) continue;
    const std::string_view name = std::string_view(key).substr(p.size());
    bool matched = false;
    try {
      matched = assign(cfg, name, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    if (!matched) throw ConfigError("unknown configuration key '" + key + "'");
  }
}

template <class Cfg>
std::vector<std::pair<std::string, std::string>> dump(std::string_view prefix, const Cfg& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  Cfg copy = cfg;
  detail::Collector c{std::string(prefix) + ".", &out};
  visit_fields(copy, c);
  return out;
}

template <class Cfg>
std::vector<std::string> field_names() {
  std::vector<std::string> out;
  Cfg cfg{};
  detail::NameCollector c{&out};
  visit_fields(cfg, c);
  return out;
}

std::string to_text(const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace chimera::config
