#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace flexnoise::io {

/// Shortest text that parses back to exactly `x` (at most 17 significant digits).
std::string format_double(double x);

double parse_double(const std::string& text);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name; throws ConfigError when absent.
    std::size_t column(const std::string& name) const;
};

/// Minimal comma-separated reader (no quoting); blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const CsvTable& table);

} // namespace flexnoise::io
