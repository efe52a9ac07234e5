#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace swisenet {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

// "key = value" lines; blank lines and '#' comments are skipped. Duplicate
// keys and lines without '=' raise ConfigError.
std::vector<KeyValue> parse_key_values(std::string_view text);

// Value parsers raising ConfigError that names the key.
std::int64_t parse_int(const KeyValue& kv);
std::uint64_t parse_uint(const KeyValue& kv);
double parse_double(const KeyValue& kv);
bool parse_bool(const KeyValue& kv);
std::vector<std::string> parse_list(const KeyValue& kv);
std::vector<int> parse_int_list(const KeyValue& kv);

// Shortest text that reads back to the same double.
std::string format_double(double v);
std::string join(const std::vector<std::string>& items, char sep = ',');
std::string join(const std::vector<int>& items, char sep = ',');

}  // namespace swisenet
