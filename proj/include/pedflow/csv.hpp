#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Minimal comma-separated reader/writer for the project's numeric tables.
// No quoting: none of the formats carry free text.

namespace pedflow::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // each row has header.size() fields
};

/// Reads a headered CSV. The header must begin with `required` (in order);
/// further columns are accepted only if listed in `optional`, in order.
/// Short rows are padded with empty fields up to the header width.
Table read(const std::filesystem::path& path, const std::vector<std::string>& required,
           const std::vector<std::string>& optional = {});

double to_double(std::string_view field, const std::filesystem::path& path, std::size_t row);
long to_long(std::string_view field, const std::filesystem::path& path, std::size_t row);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Fixed-point text with the given number of decimals (deterministic).
std::string format_fixed(double v, int decimals);

}  // namespace pedflow::csv
