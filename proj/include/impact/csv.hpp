#pragma once

// Small text helpers shared by every file format in the toolkit: unquoted
// comma-separated rows, shortest round-trip number formatting, atomic file
// writes and flat key-value configuration files.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "impact/errors.hpp"

namespace impact::csv {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

// Fields are never quoted in our formats; a trailing '\r' is dropped.
inline std::vector<std::string_view> split(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    return std::nullopt;
}

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string{};
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// Reads a whole CSV file; returns rows after the header and checks the header.
inline std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path,
                                                        std::string_view expected_header) {
    const auto text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
    if (trim(line) != expected_header)
        throw ValidationError(path.string() + ": unexpected header '" + std::string(trim(line)) + "'");
    std::vector<std::vector<std::string>> rows;
    const auto columns = split(expected_header).size();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (fields.size() != columns)
            throw ParseError(lineno, path.string() + ": expected " + std::to_string(columns) + " columns, found " +
                                         std::to_string(fields.size()));
        rows.emplace_back(fields.begin(), fields.end());
    }
    return rows;
}

inline double require_double(std::string_view field, std::string_view what) {
    auto v = parse_double(field);
    if (!v) throw ValidationError("unparsable " + std::string(what) + ": '" + std::string(field) + "'");
    return *v;
}

// Flat `key = value` text. '#' starts a comment; repeated keys accumulate.
class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text, std::string_view origin = "config") {
        KeyValueFile kv;
        std::size_t lineno = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            auto line = text.substr(start, end - start);
            start = end + 1;
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) {
                if (end == text.size()) break;
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ParseError(lineno, std::string(origin) + ": expected key = value");
            const auto key = std::string(trim(line.substr(0, eq)));
            if (key.empty()) throw ParseError(lineno, std::string(origin) + ": empty key");
            kv.values_[key].emplace_back(trim(line.substr(eq + 1)));
            if (end == text.size()) break;
        }
        return kv;
    }

    static KeyValueFile load(const std::filesystem::path& path) {
        return parse(read_file(path), path.string());
    }

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second.back();
    }

    std::vector<std::string> get_all(const std::string& key) const {
        auto it = values_.find(key);
        return it == values_.end() ? std::vector<std::string>{} : it->second;
    }

    std::optional<double> get_double(const std::string& key) const {
        auto s = get(key);
        if (!s) return std::nullopt;
        auto v = parse_double(*s);
        if (!v) throw ValidationError("config key '" + key + "': not a number: '" + *s + "'");
        return v;
    }

    std::optional<std::int64_t> get_int(const std::string& key) const {
        auto s = get(key);
        if (!s) return std::nullopt;
        auto v = parse_int(*s);
        if (!v) throw ValidationError("config key '" + key + "': not an integer: '" + *s + "'");
        return v;
    }

    std::optional<bool> get_bool(const std::string& key) const {
        auto s = get(key);
        if (!s) return std::nullopt;
        auto v = parse_bool(*s);
        if (!v) throw ValidationError("config key '" + key + "': not a boolean: '" + *s + "'");
        return v;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : values_) out.push_back(k);
        return out;
    }

private:
    std::map<std::string, std::vector<std::string>> values_;
};

}  // namespace impact::csv
