#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mmglmm {

// Sectioned key-value text: `[section]` headers, `key = value` lines, `#`
// comments. A key may repeat inside a section (e.g. several `term` lines).
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string name;
  int line = 0;
  std::vector<ConfigEntry> entries;

  // Last occurrence wins.
  std::optional<std::string> get(std::string_view key) const;
  std::vector<std::string> get_all(std::string_view key) const;
  std::vector<const ConfigEntry*> with_prefix(std::string_view prefix) const;
};

struct ConfigDocument {
  std::vector<ConfigSection> sections;

  const ConfigSection* find(std::string_view name) const;
  std::vector<const ConfigSection*> with_prefix(std::string_view prefix) const;
};

ConfigDocument parse_config(std::string_view text);

std::vector<std::string> split_list(std::string_view value, char sep = ',');
double parse_double(std::string_view value, std::string_view what);
long long parse_integer(std::string_view value, std::string_view what);
bool parse_bool(std::string_view value, std::string_view what);
// Rows separated by ';', entries by whitespace or ','.
Eigen::MatrixXd parse_matrix(std::string_view value, std::string_view what);

}  // namespace mmglmm
