#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace rftwin::config {

/// Flat `key = value` configuration. Keys are dotted paths (e.g.
/// "env.dt.carrier_hz"); `#` starts a comment; values may be double-quoted.
/// Ordered map so canonical dumps (and their hashes) are deterministic.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_string(std::string_view text);
ConfigMap parse_file(const std::filesystem::path& path);

/// Canonical serialization (sorted keys); input to config hashing.
std::string dump(const ConfigMap& map);

double get_double(const ConfigMap& map, const std::string& key, double fallback);
long long get_int(const ConfigMap& map, const std::string& key, long long fallback);
std::string get_string(const ConfigMap& map, const std::string& key, const std::string& fallback);
bool get_bool(const ConfigMap& map, const std::string& key, bool fallback);

}  // namespace rftwin::config
