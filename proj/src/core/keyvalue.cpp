#include "swisenet/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "swisenet/error.hpp"

namespace swisenet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const KeyValue& kv, const char* what) {
  throw ConfigError("line " + std::to_string(kv.line) + ": " + kv.key + " = '" + kv.value + "' is not " + what);
}

template <typename I>
I parse_integral(const KeyValue& kv, const char* what) {
  I v{};
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || kv.value.empty()) bad(kv, what);
  return v;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    KeyValue kv{trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)), n};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
    if (!seen.insert(kv.key).second) throw ConfigError("line " + std::to_string(n) + ": duplicate key " + kv.key);
    out.push_back(std::move(kv));
  }
  return out;
}

std::int64_t parse_int(const KeyValue& kv) { return parse_integral<std::int64_t>(kv, "an integer"); }

std::uint64_t parse_uint(const KeyValue& kv) { return parse_integral<std::uint64_t>(kv, "a non-negative integer"); }

double parse_double(const KeyValue& kv) {
  double v = 0.0;
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || kv.value.empty() || !std::isfinite(v)) bad(kv, "a finite number");
  return v;
}

bool parse_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  bad(kv, "a boolean (true|false)");
}

std::vector<std::string> parse_list(const KeyValue& kv) {
  std::vector<std::string> out;
  std::istringstream in(kv.value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) bad(kv, "a comma-separated list without empty items");
    out.push_back(item);
  }
  if (out.empty()) bad(kv, "a non-empty list");
  return out;
}

std::vector<int> parse_int_list(const KeyValue& kv) {
  std::vector<int> out;
  for (const auto& item : parse_list(kv)) {
    KeyValue one{kv.key, item, kv.line};
    out.push_back(parse_integral<int>(one, "an integer list"));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string join(const std::vector<int>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(items[i]);
  }
  return out;
}

}  // namespace swisenet
