#include "mmglmm/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"
#include "mmglmm/quantile.hpp"

namespace mmglmm {

namespace {

std::vector<std::string> split_record(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string trim_ws(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  while (!lines.empty() && trim_ws(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), true));
}

const Column& ObservationTable::column(const std::string& name) const {
  auto it = columns.find(name);
  if (it == columns.end()) fail(ErrorKind::UnknownColumn, "column '" + name + "' is not in the table");
  return it->second;
}

Column& ObservationTable::column(const std::string& name) {
  auto it = columns.find(name);
  if (it == columns.end()) fail(ErrorKind::UnknownColumn, "column '" + name + "' is not in the table");
  return it->second;
}

ObservationTable ObservationTable::filter_rows(const std::vector<bool>& keep) const {
  ObservationTable out;
  out.column_order = column_order;
  out.response_columns = response_columns;
  out.dropped_missing_id = dropped_missing_id;
  out.applied_steps = applied_steps;
  out.n_rows = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  for (const auto& [name, col] : columns) {
    Column c;
    c.kind = col.kind;
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (!keep[r]) continue;
      c.missing.push_back(col.missing[r]);
      if (col.kind == ColumnKind::Numeric)
        c.numbers.push_back(col.numbers[r]);
      else
        c.labels.push_back(col.labels[r]);
    }
    out.columns.emplace(name, std::move(c));
  }
  return out;
}

ObservationTable ingest_table(std::string_view text, const TableSchema& schema) {
  const auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorKind::EmptyInput, "input has no header row");

  char delim = schema.delimiter;
  if (delim == 0) delim = lines.front().find('\t') != std::string_view::npos ? '\t' : ',';

  std::vector<std::string> header;
  for (auto& h : split_record(lines.front(), delim)) header.push_back(trim_ws(h));

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second)
      fail(ErrorKind::Schema, "duplicated header name '" + header[i] + "'");
  }

  struct Declared {
    std::string name;
    ColumnKind kind;
  };
  std::vector<Declared> declared;
  std::set<std::string> seen;
  auto declare = [&](const std::vector<std::string>& names, ColumnKind kind) {
    for (const auto& n : names) {
      if (!seen.insert(n).second) {
        // Responses are usually listed again as numerics; anything else is an error.
        const bool is_response =
            std::find(schema.responses.begin(), schema.responses.end(), n) != schema.responses.end();
        const bool already_numeric = std::any_of(declared.begin(), declared.end(), [&](const Declared& d) {
          return d.name == n && d.kind == ColumnKind::Numeric;
        });
        if (kind == ColumnKind::Numeric && is_response && already_numeric) continue;
        fail(ErrorKind::Schema, "column '" + n + "' declared with more than one role");
      }
      if (!position.contains(n)) fail(ErrorKind::Schema, "declared column '" + n + "' is missing from the header");
      declared.push_back({n, kind});
    }
  };
  declare(schema.numeric, ColumnKind::Numeric);
  std::vector<std::string> extra_responses;
  for (const auto& r : schema.responses)
    if (std::find(schema.numeric.begin(), schema.numeric.end(), r) == schema.numeric.end())
      extra_responses.push_back(r);
  declare(extra_responses, ColumnKind::Numeric);
  declare(schema.categorical, ColumnKind::Categorical);
  declare(schema.identifiers, ColumnKind::Identifier);

  ObservationTable table;
  table.response_columns = schema.responses;
  for (const auto& d : declared) {
    Column c;
    c.kind = d.kind;
    table.columns.emplace(d.name, std::move(c));
    table.column_order.push_back(d.name);
  }

  std::size_t dropped = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim_ws(lines[li]).empty()) continue;
    auto fields = split_record(lines[li], delim);
    if (fields.size() != header.size())
      fail(ErrorKind::Schema, "row " + std::to_string(li) + " has " + std::to_string(fields.size()) +
                                  " fields, header has " + std::to_string(header.size()));
    bool missing_id = false;
    for (const auto& id : schema.identifiers) {
      const std::string v = trim_ws(fields[position.at(id)]);
      if (v.empty() || v == schema.missing_marker) missing_id = true;
    }
    if (missing_id) {
      ++dropped;
      continue;
    }
    for (const auto& d : declared) {
      Column& c = table.columns.at(d.name);
      const std::string v = trim_ws(fields[position.at(d.name)]);
      const bool is_missing = v.empty() || v == schema.missing_marker;
      if (d.kind == ColumnKind::Numeric) {
        auto parsed = is_missing ? std::nullopt : parse_number(v);
        c.numbers.push_back(parsed.value_or(std::numeric_limits<double>::quiet_NaN()));
        c.missing.push_back(!parsed.has_value());
      } else {
        c.labels.push_back(is_missing ? std::string() : v);
        c.missing.push_back(is_missing);
      }
    }
    ++table.n_rows;
  }
  if (dropped > 0) spdlog::warn("dropped {} row(s) lacking a grouping identifier", dropped);
  table.dropped_missing_id = dropped;
  if (table.n_rows == 0) fail(ErrorKind::EmptyInput, "input has no data rows");
  return table;
}

void PreprocessRules::validate() const {
  for (const auto& [name, t] : trim) {
    if (!(t.lo >= 0.0 && t.lo < t.hi && t.hi <= 100.0))
      fail(ErrorKind::Config, "trim percentiles for '" + name + "' must satisfy 0 <= lo < hi <= 100");
  }
  for (const auto& [name, b] : bins) {
    if (b.thresholds.empty()) fail(ErrorKind::Config, "bin rule for '" + name + "' has no thresholds");
    if (b.labels.size() != b.thresholds.size() + 1)
      fail(ErrorKind::Config, "bin rule for '" + name + "' needs exactly one more label than thresholds");
    for (std::size_t i = 1; i < b.thresholds.size(); ++i)
      if (!(b.thresholds[i] > b.thresholds[i - 1]))
        fail(ErrorKind::Config, "bin thresholds for '" + name + "' must be strictly increasing");
  }
}

std::string bin_value(const BinRule& rule, double value) {
  std::size_t k = 0;
  while (k < rule.thresholds.size() && value >= rule.thresholds[k]) ++k;
  return rule.labels[k];
}

ObservationTable preprocess(const ObservationTable& input, const PreprocessRules& rules) {
  rules.validate();
  ObservationTable table = input;

  for (const auto& [name, how] : rules.impute) {
    const std::string key = "impute:" + name + (how == Imputation::Mode ? ":mode" : ":drop");
    if (table.applied_steps.contains(key)) continue;
    Column& col = table.column(name);
    if (how == Imputation::DropRow) {
      std::vector<bool> keep(table.n_rows);
      for (std::size_t r = 0; r < table.n_rows; ++r) keep[r] = !col.missing[r];
      table = table.filter_rows(keep);
    } else if (col.missing_count() > 0) {
      // Ties resolve to the smallest value so the result is deterministic.
      if (col.kind == ColumnKind::Numeric) {
        std::map<double, std::size_t> counts;
        for (std::size_t r = 0; r < table.n_rows; ++r)
          if (!col.missing[r]) ++counts[col.numbers[r]];
        if (counts.empty()) fail(ErrorKind::Imputation, "mode of column '" + name + "' is undefined (all missing)");
        auto best = std::max_element(counts.begin(), counts.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
        for (std::size_t r = 0; r < table.n_rows; ++r)
          if (col.missing[r]) {
            col.numbers[r] = best->first;
            col.missing[r] = false;
          }
      } else {
        std::map<std::string, std::size_t> counts;
        for (std::size_t r = 0; r < table.n_rows; ++r)
          if (!col.missing[r]) ++counts[col.labels[r]];
        if (counts.empty()) fail(ErrorKind::Imputation, "mode of column '" + name + "' is undefined (all missing)");
        auto best = std::max_element(counts.begin(), counts.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
        for (std::size_t r = 0; r < table.n_rows; ++r)
          if (col.missing[r]) {
            col.labels[r] = best->first;
            col.missing[r] = false;
          }
      }
    }
    table.applied_steps.insert(key);
  }

  for (const auto& [name, rule] : rules.trim) {
    const std::string key = "trim:" + name + ":" + std::to_string(rule.lo) + ":" + std::to_string(rule.hi);
    if (table.applied_steps.contains(key)) continue;
    const Column& col = table.column(name);
    if (col.kind != ColumnKind::Numeric) fail(ErrorKind::Config, "cannot trim non-numeric column '" + name + "'");
    std::vector<double> present;
    for (std::size_t r = 0; r < table.n_rows; ++r)
      if (!col.missing[r]) present.push_back(col.numbers[r]);
    std::sort(present.begin(), present.end());
    const double lo = sorted_quantile(present, rule.lo / 100.0);
    const double hi = sorted_quantile(present, rule.hi / 100.0);
    std::vector<bool> keep(table.n_rows, true);
    for (std::size_t r = 0; r < table.n_rows; ++r)
      if (!col.missing[r] && (col.numbers[r] < lo || col.numbers[r] > hi)) keep[r] = false;
    table = table.filter_rows(keep);
    table.applied_steps.insert(key);
  }

  for (const auto& [name, rule] : rules.bins) {
    const std::string key = "bin:" + name;
    if (table.applied_steps.contains(key)) continue;
    Column& col = table.column(name);
    if (col.kind != ColumnKind::Numeric) fail(ErrorKind::Config, "cannot bin non-numeric column '" + name + "'");
    Column binned;
    binned.kind = ColumnKind::Categorical;
    binned.missing = col.missing;
    binned.labels.resize(table.n_rows);
    for (std::size_t r = 0; r < table.n_rows; ++r)
      if (!col.missing[r]) binned.labels[r] = bin_value(rule, col.numbers[r]);
    col = std::move(binned);
    table.applied_steps.insert(key);
  }
  if (table.n_rows == 0) fail(ErrorKind::EmptyInput, "preprocessing removed every row");
  return table;
}

HierarchyIndex build_hierarchy(const ObservationTable& table, const HierarchyKeys& keys) {
  const Column& pc = table.column(keys.patient);
  const Column& tc = table.column(keys.team);
  const Column& fc = table.column(keys.facility);
  for (const auto* c : {&pc, &tc, &fc})
    if (c->kind != ColumnKind::Identifier)
      fail(ErrorKind::Schema, "grouping keys must be identifier columns");

  auto index_of = [&](const Column& col, std::vector<std::string>& labels) {
    std::set<std::string> uniq(col.labels.begin(), col.labels.end());
    labels.assign(uniq.begin(), uniq.end());
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < labels.size(); ++i) pos.emplace(labels[i], i);
    std::vector<std::size_t> rows(table.n_rows);
    for (std::size_t r = 0; r < table.n_rows; ++r) rows[r] = pos.at(col.labels[r]);
    return rows;
  };

  HierarchyIndex h;
  h.row_patient = index_of(pc, h.patients);
  h.row_team = index_of(tc, h.teams);
  h.row_facility = index_of(fc, h.facilities);

  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  h.patient_team.assign(h.patients.size(), unset);
  h.team_facility.assign(h.teams.size(), unset);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    auto& pt = h.patient_team[h.row_patient[r]];
    if (pt == unset)
      pt = h.row_team[r];
    else if (pt != h.row_team[r])
      fail(ErrorKind::NestingViolation, "patient '" + h.patients[h.row_patient[r]] + "' appears under teams '" +
                                            h.teams[pt] + "' and '" + h.teams[h.row_team[r]] + "'");
    auto& tf = h.team_facility[h.row_team[r]];
    if (tf == unset)
      tf = h.row_facility[r];
    else if (tf != h.row_facility[r])
      fail(ErrorKind::NestingViolation, "team '" + h.teams[h.row_team[r]] + "' appears under facilities '" +
                                            h.facilities[tf] + "' and '" + h.facilities[h.row_facility[r]] + "'");
  }
  return h;
}

}  // namespace mmglmm
