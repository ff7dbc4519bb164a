#include "rftwin/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin {

std::string format_g10(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

std::string format_exact(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(std::string_view token, const std::string& what) {
    const std::string t{trim(token)};
    if (t.empty()) throw std::invalid_argument(what + ": empty number");
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        throw std::invalid_argument(what + ": not a number: '" + t + "'");
    return v;
}

long long parse_int(std::string_view token, const std::string& what) {
    const std::string t{trim(token)};
    if (t.empty()) throw std::invalid_argument(what + ": empty integer");
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size())
        throw std::invalid_argument(what + ": not an integer: '" + t + "'");
    return v;
}

namespace config {

ConfigMap parse_string(std::string_view text) {
    ConfigMap out;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view line =
            text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++line_no;

        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        std::string key{trim(line.substr(0, eq))};
        std::string value{trim(line.substr(eq + 1))};
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (out.count(key))
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": duplicate key '" + key + "'");
        out.emplace(std::move(key), std::move(value));
    }
    return out;
}

ConfigMap parse_file(const std::filesystem::path& path) {
    try {
        return parse_string(read_text_file(path));
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

std::string dump(const ConfigMap& map) {
    std::string out;
    for (const auto& [k, v] : map) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

double get_double(const ConfigMap& map, const std::string& key, double fallback) {
    const auto it = map.find(key);
    return it == map.end() ? fallback : parse_double(it->second, "config key " + key);
}

long long get_int(const ConfigMap& map, const std::string& key, long long fallback) {
    const auto it = map.find(key);
    return it == map.end() ? fallback : parse_int(it->second, "config key " + key);
}

std::string get_string(const ConfigMap& map, const std::string& key, const std::string& fallback) {
    const auto it = map.find(key);
    return it == map.end() ? fallback : it->second;
}

bool get_bool(const ConfigMap& map, const std::string& key, bool fallback) {
    const auto it = map.find(key);
    if (it == map.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config key " + key + ": expected true/false");
}

}  // namespace config
}  // namespace rftwin
