#include "mmglmm/terms.hpp"

#include <cmath>
#include <set>

#include "mmglmm/config.hpp"
#include "mmglmm/error.hpp"

namespace mmglmm {

namespace {

Factor parse_factor(std::string_view text) {
  const std::string s(text);
  Factor f;
  auto wrapped = [&](std::string_view fn) -> std::optional<std::string> {
    if (s.size() > fn.size() + 2 && s.starts_with(fn) && s[fn.size()] == '(' && s.back() == ')')
      return s.substr(fn.size() + 1, s.size() - fn.size() - 2);
    return std::nullopt;
  };
  if (auto inner = wrapped("sqrt")) {
    f.column = *inner;
    f.transform = Transform::SquareRoot;
  } else if (auto inner = wrapped("log")) {
    f.column = *inner;
    f.transform = Transform::Log;
  } else if (s.ends_with("^2")) {
    f.column = s.substr(0, s.size() - 2);
    f.transform = Transform::Square;
  } else if (auto eq = s.find('='); eq != std::string::npos) {
    f.column = s.substr(0, eq);
    f.level = s.substr(eq + 1);
    if (f.level->empty()) fail(ErrorKind::Config, "term factor '" + s + "' has an empty level");
  } else {
    f.column = s;
  }
  if (f.column.empty() || f.column.find_first_of("()^= ") != std::string::npos)
    fail(ErrorKind::Config, "cannot parse term factor '" + s + "'");
  return f;
}

}  // namespace

std::string Factor::label() const {
  switch (transform) {
    case Transform::Square: return column + "^2";
    case Transform::SquareRoot: return "sqrt(" + column + ")";
    case Transform::Log: return "log(" + column + ")";
    case Transform::None: break;
  }
  return level ? column + "=" + *level : column;
}

TermExpr TermExpr::parse(std::string_view text) {
  TermExpr t;
  const auto parts = split_list(text, ':');
  if (parts.empty()) fail(ErrorKind::Config, "empty term");
  if (parts.size() == 1 && parts.front() == "intercept") {
    t.intercept = true;
    return t;
  }
  std::set<std::string> seen;
  for (const auto& p : parts) {
    if (p == "intercept") fail(ErrorKind::Config, "'intercept' cannot appear inside an interaction");
    t.factors.push_back(parse_factor(p));
    if (!seen.insert(t.factors.back().label()).second)
      fail(ErrorKind::Config, "interaction '" + std::string(text) + "' repeats a source");
  }
  return t;
}

std::string TermExpr::label() const {
  if (intercept) return "intercept";
  std::string out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) out += ":";
    out += factors[i].label();
  }
  return out;
}

CategoricalCoding CategoricalCoding::from_table(const ObservationTable& table,
                                                const std::map<std::string, std::string>& requested_reference) {
  CategoricalCoding coding;
  for (const auto& [name, col] : table.columns) {
    if (col.kind != ColumnKind::Categorical) continue;
    std::set<std::string> uniq;
    for (std::size_t r = 0; r < col.size(); ++r)
      if (!col.missing[r]) uniq.insert(col.labels[r]);
    if (uniq.empty()) continue;
    std::string ref = *uniq.rbegin();
    if (auto it = requested_reference.find(name); it != requested_reference.end()) {
      if (!uniq.contains(it->second))
        fail(ErrorKind::Config, "reference level '" + it->second + "' does not occur in column '" + name + "'");
      ref = it->second;
    }
    std::vector<std::string> levels;
    for (const auto& l : uniq)
      if (l != ref) levels.push_back(l);
    coding.levels[name] = std::move(levels);
    coding.reference[name] = ref;
  }
  for (const auto& [name, ref] : requested_reference)
    if (!coding.reference.contains(name))
      fail(ErrorKind::UnknownColumn, "reference level given for '" + name + "', which is not a categorical column");
  return coding;
}

double factor_value(const Factor& factor, const ObservationTable& table, std::size_t row,
                    const std::vector<std::string>* row_labels) {
  const Column& col = table.column(factor.column);
  auto who = [&] {
    return row_labels ? "subject '" + (*row_labels)[row] + "'" : "row " + std::to_string(row + 1);
  };
  if (col.missing[row])
    fail(ErrorKind::Design, who() + " is missing covariate '" + factor.column + "'");
  if (col.kind != ColumnKind::Numeric) {
    if (!factor.level)
      fail(ErrorKind::Design, "categorical column '" + factor.column + "' needs an explicit level here");
    return col.labels[row] == *factor.level ? 1.0 : 0.0;
  }
  if (factor.level) fail(ErrorKind::Design, "numeric column '" + factor.column + "' cannot take a level");
  const double x = col.numbers[row];
  switch (factor.transform) {
    case Transform::None: return x;
    case Transform::Square: return x * x;
    case Transform::SquareRoot:
      if (x < 0) fail(ErrorKind::Design, who() + ": sqrt of negative '" + factor.column + "'");
      return std::sqrt(x);
    case Transform::Log:
      if (x <= 0) fail(ErrorKind::Design, who() + ": log of non-positive '" + factor.column + "'");
      return std::log(x);
  }
  return x;
}

std::vector<ExpandedColumn> expand_term(const TermExpr& term, const ObservationTable& table,
                                        const CategoricalCoding& coding,
                                        const std::vector<std::string>* row_labels) {
  const std::size_t n = table.n_rows;
  if (term.intercept) return {{"intercept", std::vector<double>(n, 1.0)}};

  std::vector<ExpandedColumn> out{{"", std::vector<double>(n, 1.0)}};
  for (const auto& f : term.factors) {
    const Column& col = table.column(f.column);
    std::vector<Factor> pieces;
    if (col.kind == ColumnKind::Categorical && !f.level) {
      if (f.transform != Transform::None)
        fail(ErrorKind::Config, "transform applied to categorical column '" + f.column + "'");
      auto it = coding.levels.find(f.column);
      if (it == coding.levels.end() || it->second.empty())
        fail(ErrorKind::Design, "categorical column '" + f.column + "' has no non-reference level");
      for (const auto& level : it->second) pieces.push_back(Factor{f.column, Transform::None, level});
    } else if (col.kind == ColumnKind::Identifier) {
      fail(ErrorKind::Config, "identifier column '" + f.column + "' cannot be a covariate");
    } else {
      pieces.push_back(f);
    }
    if (col.kind == ColumnKind::Categorical) {
      for (std::size_t r = 0; r < n; ++r) {
        if (col.missing[r]) continue;
        const auto& levels = coding.levels.at(f.column);
        if (col.labels[r] != coding.reference.at(f.column) &&
            std::find(levels.begin(), levels.end(), col.labels[r]) == levels.end())
          fail(ErrorKind::Prediction, "unknown level '" + col.labels[r] + "' in column '" + f.column + "'");
      }
    }
    std::vector<ExpandedColumn> next;
    for (const auto& partial : out) {
      for (const auto& piece : pieces) {
        ExpandedColumn c;
        c.label = partial.label.empty() ? piece.label() : partial.label + ":" + piece.label();
        c.values.resize(n);
        for (std::size_t r = 0; r < n; ++r) c.values[r] = partial.values[r] * factor_value(piece, table, r, row_labels);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace mmglmm
