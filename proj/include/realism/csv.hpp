#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace realism {

/// Minimal comma-separated text: no quoting, fields are trimmed of spaces
/// and a trailing '\r'. Identifiers in this project never contain commas.
struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number of each row, for error messages.
    std::vector<std::size_t> line_numbers;
};

std::vector<std::string> split_csv_line(std::string_view line);

/// Reads a CSV with a header line. Blank lines are skipped; every row must
/// have as many fields as the header.
CsvFile read_csv(const std::filesystem::path& path);

double parse_double_field(const std::string& text, const std::filesystem::path& path, std::size_t line);
long long parse_int_field(const std::string& text, const std::filesystem::path& path, std::size_t line);

/// Shortest "%.{digits}g" rendering.
std::string format_double(double value, int significant_digits);

} // namespace realism
