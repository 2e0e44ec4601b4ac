#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmglmm/table.hpp"

namespace mmglmm {

enum class Transform { None, Square, SquareRoot, Log };

// One column reference inside a term, optionally transformed (numeric) or
// pinned to a single level (categorical dummy, written `col=level`).
struct Factor {
  std::string column;
  Transform transform = Transform::None;
  std::optional<std::string> level;

  std::string label() const;
  bool operator==(const Factor&) const = default;
};

// `intercept`, `age`, `age^2`, `sqrt(can)`, `log(los)`, `sex`, `sex=M`, and
// products of these joined by ':'.
struct TermExpr {
  bool intercept = false;
  std::vector<Factor> factors;

  static TermExpr parse(std::string_view text);
  std::string label() const;
  bool operator==(const TermExpr&) const = default;
};

// Reference-cell coding for categorical columns: the levels that receive a
// dummy column (sorted, reference removed) and the reference of each column.
struct CategoricalCoding {
  std::map<std::string, std::vector<std::string>> levels;
  std::map<std::string, std::string> reference;

  // Levels come from the table; reference defaults to the last sorted level.
  static CategoricalCoding from_table(const ObservationTable& table,
                                      const std::map<std::string, std::string>& requested_reference);
};

struct ExpandedColumn {
  std::string label;
  std::vector<double> values;
};

// Expands a term into one or more numeric columns over the table rows.
// `row_labels` (optional) names subjects in diagnostics.
std::vector<ExpandedColumn> expand_term(const TermExpr& term, const ObservationTable& table,
                                        const CategoricalCoding& coding,
                                        const std::vector<std::string>* row_labels = nullptr);

// Numeric value of a single fully-specified factor at a row.
double factor_value(const Factor& factor, const ObservationTable& table, std::size_t row,
                    const std::vector<std::string>* row_labels = nullptr);

}  // namespace mmglmm
