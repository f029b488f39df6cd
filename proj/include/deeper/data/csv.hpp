#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deeper::data {

using CsvRow = std::vector<std::string>;

// RFC 4180: comma separated, double-quoted fields may hold commas, quotes
// ("") and line breaks. A trailing newline does not produce an empty row.
std::vector<CsvRow> parse_csv(std::string_view text, const std::string& source = "<csv>");
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string format_csv_row(const CsvRow& row);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace deeper::data
