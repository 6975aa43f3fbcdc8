#include "chimera/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>

namespace chimera::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
void parse_number(std::string_view text, T& out, const char* kind) {
  const std::string_view t = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError(fmt::format("expected {} but got '{}'", kind, t));
  }
  out = value;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in) {
  KeyValueFile file;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    }
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", lineno));
    file.set(std::string(key), std::string(value));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

void parse_value(std::string_view text, double& out) {
  parse_number(text, out, "a number");
  if (!std::isfinite(out)) throw ConfigError(fmt::format("'{}' is not finite", trim(text)));
}
void parse_value(std::string_view text, int& out) { parse_number(text, out, "an integer"); }
void parse_value(std::string_view text, std::uint64_t& out) { parse_number(text, out, "an unsigned integer"); }
void parse_value(std::string_view text, bool& out) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") {
    out = true;
  } else if (t == "false" || t == "0" || t == "no") {
    out = false;
  } else {
    throw ConfigError(fmt::format("expected a boolean but got '{}'", t));
  }
}

std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(int v) { return fmt::format("{}", v); }
std::string format_value(std::uint64_t v) { return fmt::format("{}", v); }
std::string format_value(bool v) { return v ? "true" : "false"; }

std::string to_text(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += fmt::format("{} = {}\n", k, v);
  return out;
}

}  // namespace chimera::config
