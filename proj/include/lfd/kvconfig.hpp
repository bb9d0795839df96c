#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfd/arch.hpp"
#include "lfd/trainer.hpp"

namespace lfd {

// Flat `key = value` text. One entry per line; `#` starts a comment; blank
// lines are ignored; duplicate keys are an error. Lists are comma separated.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

// Each override is "key=value" and replaces or adds that key.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& overrides);

// Typed accessors; ConfigError names the key on a malformed value.
std::int64_t get_int(const KeyValues& kv, const std::string& key);
std::uint64_t get_uint(const KeyValues& kv, const std::string& key);
double get_double(const KeyValues& kv, const std::string& key);
bool get_bool(const KeyValues& kv, const std::string& key);  // true/false/1/0/yes/no
std::vector<std::int64_t> get_int_list(const KeyValues& kv, const std::string& key);
std::vector<double> get_double_list(const KeyValues& kv, const std::string& key);
std::vector<std::string> get_string_list(const KeyValues& kv, const std::string& key);

// Keys absent from `kv` keep their defaults; unknown keys are a ConfigError.
ArchConfig arch_config_from(const KeyValues& kv, ArchConfig base = {});
TrainConfig train_config_from(const KeyValues& kv, TrainConfig base = {});

KeyValues to_key_values(const ArchConfig& config);
KeyValues to_key_values(const TrainConfig& config);

}  // namespace lfd
