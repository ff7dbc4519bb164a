#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rftwin {

/// 10-significant-digit formatting used by the CSV interchange files;
/// guarantees round-trip relative error <= 5e-10.
std::string format_g10(double x);

/// Shortest exact formatting (%.17g); round-trips doubles bit-exactly.
std::string format_exact(double x);

std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Strict scalar parsers: the whole token must be consumed.
double parse_double(std::string_view token, const std::string& what);
long long parse_int(std::string_view token, const std::string& what);

}  // namespace rftwin
