#include "realism/csv.hpp"

#include "realism/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace realism {

namespace fs = std::filesystem;

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto end = line.find(',', start);
        auto field = line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
        out.emplace_back(field);
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

CsvFile read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path.string());
    CsvFile csv;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            csv.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != csv.header.size()) {
            throw Error(ErrorCategory::bad_csv, path.string() + ":" + std::to_string(number) + ": expected " +
                                                    std::to_string(csv.header.size()) + " fields, got " +
                                                    std::to_string(fields.size()));
        }
        csv.rows.push_back(std::move(fields));
        csv.line_numbers.push_back(number);
    }
    if (!have_header) throw Error(ErrorCategory::bad_csv, path.string() + ": empty file");
    return csv;
}

double parse_double_field(const std::string& text, const fs::path& path, std::size_t line) {
    // strtod rather than from_chars: libstdc++ 11 lacks floating-point from_chars on some targets.
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
        throw Error(ErrorCategory::bad_csv,
                    path.string() + ":" + std::to_string(line) + ": not a finite number: '" + text + "'");
    }
    return v;
}

long long parse_int_field(const std::string& text, const fs::path& path, std::size_t line) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::bad_csv,
                    path.string() + ":" + std::to_string(line) + ": not an integer: '" + text + "'");
    }
    return v;
}

std::string format_double(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

} // namespace realism
