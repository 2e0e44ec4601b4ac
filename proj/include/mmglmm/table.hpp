#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmglmm {

enum class ColumnKind { Numeric, Categorical, Identifier };

struct Column {
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> numbers;       // Numeric only
  std::vector<std::string> labels;   // Categorical / Identifier only
  std::vector<bool> missing;

  std::size_t size() const { return missing.size(); }
  std::size_t missing_count() const;
};

// Long-format table: one row per subject-period.
struct ObservationTable {
  std::map<std::string, Column> columns;
  std::vector<std::string> column_order;
  std::vector<std::string> response_columns;
  std::size_t n_rows = 0;
  std::size_t dropped_missing_id = 0;
  // Keys of preprocessing steps already applied; re-applying one is a no-op.
  std::set<std::string> applied_steps;

  bool has(const std::string& name) const { return columns.contains(name); }
  const Column& column(const std::string& name) const;
  Column& column(const std::string& name);

  // Copy keeping only the rows whose flag is true.
  ObservationTable filter_rows(const std::vector<bool>& keep) const;
};

struct TableSchema {
  char delimiter = 0;  // 0: detect from header (tab if present, else comma)
  std::string missing_marker = "NA";
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
  std::vector<std::string> identifiers;
  std::vector<std::string> responses;  // numeric, listed in response order
};

// Parses delimited text. Unparseable numeric cells become missing; rows
// lacking any identifier are dropped and counted.
ObservationTable ingest_table(std::string_view text, const TableSchema& schema);

enum class Imputation { Mode, DropRow };

struct TrimRule {
  double lo = 0.0;   // percentiles, 0 <= lo < hi <= 100
  double hi = 100.0;
};

// Values below thresholds[0] get labels[0]; values in [thresholds[k-1],
// thresholds[k]) get labels[k]; values at or above the last threshold get the
// last label.
struct BinRule {
  std::vector<double> thresholds;
  std::vector<std::string> labels;
};

struct PreprocessRules {
  std::map<std::string, Imputation> impute;
  std::map<std::string, TrimRule> trim;
  std::map<std::string, BinRule> bins;

  void validate() const;
};

// Imputation, then percentile trimming, then binning.
ObservationTable preprocess(const ObservationTable& table, const PreprocessRules& rules);

std::string bin_value(const BinRule& rule, double value);

struct HierarchyKeys {
  std::string patient;
  std::string team;
  std::string facility;
};

// Group labels are stored sorted; every row maps to one index per level.
struct HierarchyIndex {
  std::vector<std::string> patients;
  std::vector<std::string> teams;
  std::vector<std::string> facilities;
  std::vector<std::size_t> row_patient;
  std::vector<std::size_t> row_team;
  std::vector<std::size_t> row_facility;
  std::vector<std::size_t> patient_team;
  std::vector<std::size_t> team_facility;

  std::size_t n_patients() const { return patients.size(); }
  std::size_t n_teams() const { return teams.size(); }
  std::size_t n_facilities() const { return facilities.size(); }
};

HierarchyIndex build_hierarchy(const ObservationTable& table, const HierarchyKeys& keys);

}  // namespace mmglmm
