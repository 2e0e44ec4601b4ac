#include "mmglmm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "mmglmm/error.hpp"

namespace mmglmm {

namespace {

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<std::string> ConfigSection::get(std::string_view key) const {
  std::optional<std::string> out;
  for (const auto& e : entries)
    if (e.key == key) out = e.value;
  return out;
}

std::vector<std::string> ConfigSection::get_all(std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.key == key) out.push_back(e.value);
  return out;
}

std::vector<const ConfigEntry*> ConfigSection::with_prefix(std::string_view prefix) const {
  std::vector<const ConfigEntry*> out;
  for (const auto& e : entries)
    if (e.key.starts_with(prefix)) out.push_back(&e);
  return out;
}

const ConfigSection* ConfigDocument::find(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const ConfigSection*> ConfigDocument::with_prefix(std::string_view prefix) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections)
    if (s.name.starts_with(prefix)) out.push_back(&s);
  return out;
}

ConfigDocument parse_config(std::string_view text) {
  ConfigDocument doc;
  int line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trimmed(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": unterminated section header");
      const std::string name = trimmed(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty section name");
      if (doc.find(name)) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": section [" + name + "] repeated");
      doc.sections.push_back({name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected 'key = value'");
    if (doc.sections.empty())
      fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": entry outside of any section");
    ConfigEntry entry{trimmed(std::string_view(line).substr(0, eq)), trimmed(std::string_view(line).substr(eq + 1)),
                      line_no};
    if (entry.key.empty()) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
    doc.sections.back().entries.push_back(std::move(entry));
  }
  return doc;
}

std::vector<std::string> split_list(std::string_view value, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto end = value.find(sep, start);
    if (end == std::string_view::npos) end = value.size();
    auto item = trimmed(value.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = end + 1;
  }
  return out;
}

double parse_double(std::string_view value, std::string_view what) {
  const std::string s = trimmed(value);
  double out = 0.0;
  const char* first = s.data();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::Config, std::string(what) + ": '" + s + "' is not a number");
  return out;
}

long long parse_integer(std::string_view value, std::string_view what) {
  const std::string s = trimmed(value);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::Config, std::string(what) + ": '" + s + "' is not an integer");
  return out;
}

bool parse_bool(std::string_view value, std::string_view what) {
  std::string s = trimmed(value);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  fail(ErrorKind::Config, std::string(what) + ": '" + s + "' is not a boolean");
}

Eigen::MatrixXd parse_matrix(std::string_view value, std::string_view what) {
  std::vector<std::vector<double>> rows;
  for (const auto& row : split_list(value, ';')) {
    std::string normalized = row;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::vector<double> entries;
    std::size_t pos = 0;
    while (pos < normalized.size()) {
      while (pos < normalized.size() && std::isspace(static_cast<unsigned char>(normalized[pos]))) ++pos;
      if (pos >= normalized.size()) break;
      auto next = normalized.find_first_of(" \t", pos);
      if (next == std::string::npos) next = normalized.size();
      entries.push_back(parse_double(std::string_view(normalized).substr(pos, next - pos), what));
      pos = next;
    }
    rows.push_back(std::move(entries));
  }
  if (rows.empty()) fail(ErrorKind::Config, std::string(what) + ": empty matrix");
  const auto cols = rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) fail(ErrorKind::Config, std::string(what) + ": ragged matrix rows");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace mmglmm
