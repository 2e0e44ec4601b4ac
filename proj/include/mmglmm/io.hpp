#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mmglmm {

std::string read_file(const std::string& path);

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::string& path, std::string_view content);

void ensure_directory(const std::string& path);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::uint64_t fnv1a_hash(std::string_view bytes);
std::string hex_hash(std::uint64_t hash);

// Minimal comma-separated reader for the files this library writes itself.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;
};

CsvTable parse_csv(std::string_view text, char delimiter = ',');
std::string csv_escape(std::string_view field);

}  // namespace mmglmm
