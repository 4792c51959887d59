#pragma once

// Minimal CSV reading and writing: comma separated, optional double quotes
// around a field, no embedded newlines. Doubles are written with 17
// significant digits so a write/read cycle is bit exact.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace si::csv {

using Row = std::vector<std::string>;

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline Row split_line(std::string_view line) {
    Row out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.emplace_back(trim(field));
    return out;
}

/// All non-blank lines of the file, split into fields.
inline std::vector<Row> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::vector<Row> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(split_line(line));
    }
    return rows;
}

inline double parse_double(std::string_view field, std::string_view where) {
    field = trim(field);
    if (field.empty()) throw InputError("missing cell at " + std::string(where));
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw InputError("non-numeric cell '" + std::string(field) + "' at " + std::string(where));
    if (!std::isfinite(value)) throw InputError("non-finite cell at " + std::string(where));
    return value;
}

inline bool is_number(std::string_view field) {
    field = trim(field);
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    return ec == std::errc{} && ptr == field.data() + field.size();
}

inline std::string format_double(double x) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline void write_rows(const std::filesystem::path& path, const std::vector<Row>& rows) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path.string());
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << quote_if_needed(row[i]);
        }
        out << '\n';
    }
}

}  // namespace si::csv
