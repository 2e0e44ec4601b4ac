#include "mmglmm/model_spec.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"

namespace mmglmm {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::GaussianLog: return "gaussian-log";
    case Family::PoissonLog: return "poisson-log";
  }
  return "gaussian";
}

Family parse_family(std::string_view text) {
  if (text == "gaussian") return Family::Gaussian;
  if (text == "gaussian-log" || text == "lognormal") return Family::GaussianLog;
  if (text == "poisson-log" || text == "poisson") return Family::PoissonLog;
  fail(ErrorKind::Config, "unknown family '" + std::string(text) + "'");
}

std::string_view to_string(BlockLevel level) {
  switch (level) {
    case BlockLevel::Residual: return "residual";
    case BlockLevel::Team: return "team";
    case BlockLevel::Facility: return "facility";
  }
  return "residual";
}

std::string_view to_string(ParametricShape shape) {
  switch (shape) {
    case ParametricShape::Unstructured: return "unstructured";
    case ParametricShape::Diagonal: return "diagonal";
    case ParametricShape::Scalar: return "scalar";
  }
  return "unstructured";
}

bool is_symmetric_positive_definite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if (!m.isApprox(m.transpose(), 1e-12) && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

std::vector<std::vector<int>> RandomBlockSpec::partition(std::size_t n_responses) const {
  const int slots = static_cast<int>(slot_count(n_responses));
  std::vector<std::vector<int>> groups;
  if (shape == ParametricShape::Diagonal) {
    for (int s = 0; s < slots; ++s) groups.push_back({s});
  } else if (shape == ParametricShape::Scalar || joint_responses) {
    std::vector<int> all(static_cast<std::size_t>(slots));
    for (int s = 0; s < slots; ++s) all[static_cast<std::size_t>(s)] = s;
    groups.push_back(std::move(all));
  } else {
    const int p_count = static_cast<int>(n_responses);
    for (int p = 0; p < p_count; ++p) {
      std::vector<int> g;
      for (int t = 0; t < static_cast<int>(terms.size()); ++t) g.push_back(t * p_count + p);
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

std::vector<std::string> RandomBlockSpec::slot_labels(const std::vector<std::string>& responses) const {
  std::vector<std::string> out;
  for (const auto& t : terms)
    for (const auto& r : responses)
      out.push_back(level == BlockLevel::Residual ? r : t.label() + "." + r);
  return out;
}

namespace {

const std::set<std::string> kKnownSections = {"data", "responses", "fixed", "constraints", "priors", "mcmc", "preprocess"};

void check_keys(const ConfigSection& s, const std::set<std::string>& allowed, const std::vector<std::string>& prefixes = {}) {
  for (const auto& e : s.entries) {
    if (allowed.contains(e.key)) continue;
    if (std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return e.key.starts_with(p); }))
      continue;
    fail(ErrorKind::Config, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
  }
}

const ConfigSection& require_section(const ConfigDocument& doc, std::string_view name) {
  const auto* s = doc.find(name);
  if (!s) fail(ErrorKind::Config, "missing section [" + std::string(name) + "]");
  return *s;
}

// Level at which a column is constant: facility, team, or patient (row).
BlockLevel column_level(const ObservationTable& table, const std::string& name, const HierarchyKeys& keys) {
  const Column& col = table.column(name);
  auto constant_within = [&](const std::string& key) {
    if (!table.has(key)) return false;
    const Column& g = table.column(key);
    std::unordered_map<std::string, std::string> seen;
    for (std::size_t r = 0; r < table.n_rows; ++r) {
      const std::string v = col.kind == ColumnKind::Numeric ? std::to_string(col.numbers[r]) : col.labels[r];
      auto [it, inserted] = seen.emplace(g.labels[r], v);
      if (!inserted && it->second != v) return false;
    }
    return true;
  };
  if (constant_within(keys.facility)) return BlockLevel::Facility;
  if (constant_within(keys.team)) return BlockLevel::Team;
  return BlockLevel::Residual;
}

void check_columns(const TermExpr& term, const ObservationTable& table, bool numeric_only, const std::string& where) {
  for (const auto& f : term.factors) {
    if (!table.has(f.column))
      fail(ErrorKind::UnknownColumn, "column '" + f.column + "' referenced by " + where + " does not exist");
    const Column& col = table.column(f.column);
    if (col.kind == ColumnKind::Identifier)
      fail(ErrorKind::Config, "identifier column '" + f.column + "' cannot be used in " + where);
    if (f.transform != Transform::None && col.kind != ColumnKind::Numeric)
      fail(ErrorKind::Config, "transform in " + where + " applies to non-numeric column '" + f.column + "'");
    if (f.level && col.kind != ColumnKind::Categorical)
      fail(ErrorKind::Config, "level selector in " + where + " used on non-categorical column '" + f.column + "'");
    if (numeric_only && col.kind != ColumnKind::Numeric)
      fail(ErrorKind::Config, "random slope '" + term.label() + "' in " + where + " must be numeric");
  }
}

// Expands a user V (scalar, full slot matrix, or per-response term matrix) to
// the full slot dimension.
Eigen::MatrixXd expand_limit(const Eigen::MatrixXd& given, const RandomBlockSpec& block, std::size_t n_resp) {
  const auto slots = static_cast<Eigen::Index>(block.slot_count(n_resp));
  const auto terms = static_cast<Eigen::Index>(block.terms.size());
  const auto P = static_cast<Eigen::Index>(n_resp);
  if (given.rows() == 1 && given.cols() == 1) return given(0, 0) * Eigen::MatrixXd::Identity(slots, slots);
  if (given.rows() == slots && given.cols() == slots) return given;
  if (!block.joint_responses && given.rows() == terms && given.cols() == terms) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(slots, slots);
    for (Eigen::Index p = 0; p < P; ++p)
      for (Eigen::Index t = 0; t < terms; ++t)
        for (Eigen::Index s = 0; s < terms; ++s) full(t * P + p, s * P + p) = given(t, s);
    return full;
  }
  fail(ErrorKind::Config, "prior V of block '" + block.name + "' has dimension " + std::to_string(given.rows()) + "x" +
                              std::to_string(given.cols()) + ", expected 1x1 or " + std::to_string(slots) + "x" +
                              std::to_string(slots));
}

std::size_t sampled_dimension(const RandomBlockSpec& block, std::size_t n_resp) {
  if (block.shape != ParametricShape::Unstructured) return 1;
  return block.joint_responses ? block.slot_count(n_resp) : block.terms.size();
}

RandomBlockSpec parse_block(const ConfigSection& s, const ObservationTable& table, std::size_t n_resp,
                            double default_limit) {
  check_keys(s, {"level", "terms", "shape", "responses", "V", "nu", "fix", "center_scale"});
  RandomBlockSpec b;
  b.name = s.name.substr(std::string_view("random.").size());
  if (b.name.empty()) fail(ErrorKind::Config, "random block section needs a name: [random.<name>]");
  const std::string level = s.get("level").value_or(b.name);
  if (level == "team")
    b.level = BlockLevel::Team;
  else if (level == "facility")
    b.level = BlockLevel::Facility;
  else if (level == "residual" || level == "patient" || level == "patient-residual")
    b.level = BlockLevel::Residual;
  else
    fail(ErrorKind::Config, "block '" + b.name + "': unknown level '" + level + "'");

  if (b.level == BlockLevel::Residual) {
    if (auto t = s.get("terms"); t && split_list(*t) != std::vector<std::string>{"intercept"})
      fail(ErrorKind::Config, "residual block '" + b.name + "' takes no slope terms");
    b.terms = {TermExpr::parse("intercept")};
  } else {
    const auto t = s.get("terms");
    if (!t) fail(ErrorKind::Config, "block '" + b.name + "' declares no terms");
    for (const auto& item : split_list(*t)) {
      b.terms.push_back(TermExpr::parse(item));
      check_columns(b.terms.back(), table, true, "block '" + b.name + "'");
    }
    if (b.terms.empty()) fail(ErrorKind::Config, "block '" + b.name + "' declares no terms");
  }

  const std::string shape = s.get("shape").value_or("unstructured");
  if (shape == "unstructured")
    b.shape = ParametricShape::Unstructured;
  else if (shape == "diagonal")
    b.shape = ParametricShape::Diagonal;
  else if (shape == "scalar")
    b.shape = ParametricShape::Scalar;
  else
    fail(ErrorKind::Config, "block '" + b.name + "': unknown shape '" + shape + "'");

  const std::string resp = s.get("responses").value_or("joint");
  if (resp == "joint")
    b.joint_responses = true;
  else if (resp == "separate" || resp == "independent")
    b.joint_responses = false;
  else
    fail(ErrorKind::Config, "block '" + b.name + "': responses must be 'joint' or 'separate'");

  if (auto v = s.get("fix")) b.fixed = parse_bool(*v, "fix");
  if (auto v = s.get("center_scale")) b.center_scale = parse_bool(*v, "center_scale");

  const auto slots = static_cast<Eigen::Index>(b.slot_count(n_resp));
  if (auto v = s.get("V"))
    b.prior.limit = expand_limit(parse_matrix(*v, "block '" + b.name + "' V"), b, n_resp);
  else
    b.prior.limit = default_limit * Eigen::MatrixXd::Identity(slots, slots);
  if (b.shape != ParametricShape::Unstructured) {
    const Eigen::VectorXd d = b.prior.limit.diagonal();
    b.prior.limit = d.asDiagonal();
  } else if (!b.joint_responses) {
    // Cross-response entries are structurally zero.
    const auto P = static_cast<Eigen::Index>(n_resp);
    for (Eigen::Index i = 0; i < slots; ++i)
      for (Eigen::Index j = 0; j < slots; ++j)
        if (i % P != j % P) b.prior.limit(i, j) = 0.0;
  }
  if (b.shape == ParametricShape::Scalar) {
    const double v0 = b.prior.limit(0, 0);
    b.prior.limit = v0 * Eigen::MatrixXd::Identity(slots, slots);
  }
  if (!is_symmetric_positive_definite(b.prior.limit))
    fail(ErrorKind::NotPositiveDefinite, "prior V of block '" + b.name + "' is not symmetric positive definite");

  b.prior.belief = s.get("nu") ? parse_double(*s.get("nu"), "nu") : static_cast<double>(b.parametric_dim(n_resp));
  const auto d = sampled_dimension(b, n_resp);
  if (!b.fixed && !(b.prior.belief > static_cast<double>(d) - 1.0))
    fail(ErrorKind::ImproperPrior, "block '" + b.name + "': degree of belief " + std::to_string(b.prior.belief) +
                                       " must exceed " + std::to_string(d - 1) + " for a proper inverse-Wishart");
  return b;
}

}  // namespace

HierarchyKeys keys_from_config(const ConfigDocument& doc) {
  const auto& data = require_section(doc, "data");
  HierarchyKeys k;
  k.patient = data.get("patient").value_or("patient");
  k.team = data.get("team").value_or("team");
  k.facility = data.get("facility").value_or("facility");
  return k;
}

TableSchema schema_from_config(const ConfigDocument& doc) {
  const auto& data = require_section(doc, "data");
  check_keys(data, {"delimiter", "missing", "patient", "team", "facility", "numeric", "categorical", "identifiers"});
  TableSchema schema;
  if (auto d = data.get("delimiter")) {
    if (*d == "tab" || *d == "\\t")
      schema.delimiter = '\t';
    else if (*d == "comma" || *d == ",")
      schema.delimiter = ',';
    else if (d->size() == 1)
      schema.delimiter = (*d)[0];
    else
      fail(ErrorKind::Config, "delimiter must be a single character, 'comma' or 'tab'");
  }
  if (auto m = data.get("missing")) schema.missing_marker = *m;
  if (auto v = data.get("numeric")) schema.numeric = split_list(*v);
  if (auto v = data.get("categorical")) schema.categorical = split_list(*v);
  const auto keys = keys_from_config(doc);
  schema.identifiers = {keys.patient, keys.team, keys.facility};
  if (auto v = data.get("identifiers"))
    for (const auto& id : split_list(*v))
      if (std::find(schema.identifiers.begin(), schema.identifiers.end(), id) == schema.identifiers.end())
        schema.identifiers.push_back(id);
  const auto& responses = require_section(doc, "responses");
  if (auto v = responses.get("names")) schema.responses = split_list(*v);
  return schema;
}

PreprocessRules preprocess_from_config(const ConfigDocument& doc) {
  PreprocessRules rules;
  const auto* s = doc.find("preprocess");
  if (!s) return rules;
  check_keys(*s, {}, {"impute.", "trim.", "bin."});
  for (const auto& e : s->entries) {
    if (e.key.starts_with("impute.")) {
      const std::string col = e.key.substr(7);
      if (e.value == "mode")
        rules.impute[col] = Imputation::Mode;
      else if (e.value == "drop" || e.value == "drop-row")
        rules.impute[col] = Imputation::DropRow;
      else
        fail(ErrorKind::Config, "imputation for '" + col + "' must be 'mode' or 'drop'");
    } else if (e.key.starts_with("trim.")) {
      const auto parts = split_list(e.value);
      if (parts.size() != 2) fail(ErrorKind::Config, "trim rule for '" + e.key.substr(5) + "' needs 'lo, hi'");
      rules.trim[e.key.substr(5)] = {parse_double(parts[0], e.key), parse_double(parts[1], e.key)};
    } else {
      const auto halves = split_list(e.value, '|');
      if (halves.size() != 2) fail(ErrorKind::Config, "bin rule '" + e.key + "' needs 'thresholds | labels'");
      BinRule rule;
      for (const auto& t : split_list(halves[0])) rule.thresholds.push_back(parse_double(t, e.key));
      rule.labels = split_list(halves[1]);
      rules.bins[e.key.substr(4)] = std::move(rule);
    }
  }
  rules.validate();
  return rules;
}

ModelSpec parse_model_config(std::string_view text, const ObservationTable& table) {
  return parse_model_config(parse_config(text), table);
}

ModelSpec parse_model_config(const ConfigDocument& doc, const ObservationTable& table) {
  for (const auto& s : doc.sections)
    if (!kKnownSections.contains(s.name) && !s.name.starts_with("random."))
      fail(ErrorKind::Config, "line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");

  ModelSpec spec;
  spec.keys = keys_from_config(doc);
  for (const auto* key : {&spec.keys.patient, &spec.keys.team, &spec.keys.facility})
    if (!table.has(*key)) fail(ErrorKind::UnknownColumn, "grouping column '" + *key + "' does not exist");

  // Responses and family.
  const auto& rs = require_section(doc, "responses");
  check_keys(rs, {"names", "family", "link", "scale"});
  if (auto v = rs.get("names")) spec.responses = split_list(*v);
  if (spec.responses.empty()) fail(ErrorKind::Config, "[responses] names lists no response");
  spec.family.family = parse_family(rs.get("family").value_or("gaussian"));
  spec.family.link = spec.family.family == Family::PoissonLog ? Link::Log : Link::Identity;
  if (auto link = rs.get("link")) {
    if (*link != "log" && *link != "identity") fail(ErrorKind::Config, "unknown link '" + *link + "'");
    const Link wanted = *link == "log" ? Link::Log : Link::Identity;
    // gaussian-log is an identity link on the log-transformed response.
    if (wanted != spec.family.link)
      fail(ErrorKind::Config, "link '" + *link + "' is not available for family '" +
                                  std::string(to_string(spec.family.family)) + "'");
  }
  if (auto v = rs.get("scale")) spec.scale_responses = parse_bool(*v, "scale");
  if (spec.scale_responses && spec.family.family == Family::PoissonLog)
    fail(ErrorKind::Config, "count responses cannot be rescaled (scale = true with poisson-log)");
  spec.family.estimate_dispersion = spec.family.family != Family::PoissonLog;

  std::set<std::string> seen_resp;
  for (const auto& r : spec.responses) {
    if (!seen_resp.insert(r).second) fail(ErrorKind::Config, "response '" + r + "' listed twice");
    if (!table.has(r)) fail(ErrorKind::UnknownColumn, "response column '" + r + "' does not exist");
    const Column& col = table.column(r);
    if (col.kind != ColumnKind::Numeric) fail(ErrorKind::Schema, "response column '" + r + "' is not numeric");
    for (std::size_t row = 0; row < table.n_rows; ++row) {
      if (col.missing[row])
        fail(ErrorKind::Schema, "response column '" + r + "' is missing at row " + std::to_string(row + 1));
      const double y = col.numbers[row];
      if (spec.family.family == Family::GaussianLog && !(y > 0))
        fail(ErrorKind::ResponseSupport, "gaussian-log response '" + r + "' has non-positive value " +
                                             std::to_string(y) + " at row " + std::to_string(row + 1));
      if (spec.family.family == Family::PoissonLog && (y < 0 || std::floor(y) != y))
        fail(ErrorKind::ResponseSupport, "poisson-log response '" + r + "' has non-count value " +
                                             std::to_string(y) + " at row " + std::to_string(row + 1));
    }
  }
  const std::size_t P = spec.responses.size();

  // Fixed terms.
  std::vector<std::string> shared_labels;
  if (const auto* fs = doc.find("fixed")) {
    check_keys(*fs, {"intercept", "term", "shared"}, {"reference."});
    if (auto v = fs->get("intercept")) spec.intercepts = parse_bool(*v, "intercept");
    for (const auto& e : fs->with_prefix("reference.")) spec.reference_levels[e->key.substr(10)] = e->value;
    for (const auto& v : fs->get_all("shared"))
      for (const auto& l : split_list(v)) shared_labels.push_back(TermExpr::parse(l).label());
    std::set<std::string> labels;
    for (const auto& v : fs->get_all("term")) {
      FixedTermSpec term;
      term.expr = TermExpr::parse(v);
      if (term.expr.intercept) fail(ErrorKind::Config, "use 'intercept = true|false' instead of an intercept term");
      check_columns(term.expr, table, false, "fixed term '" + v + "'");
      if (!labels.insert(term.expr.label()).second)
        fail(ErrorKind::Config, "fixed term '" + term.expr.label() + "' declared twice");
      if (term.expr.factors.size() == 1) {
        term.kind = term.expr.factors[0].transform == Transform::None ? TermKind::Main : TermKind::Transform;
      } else {
        std::set<BlockLevel> levels;
        for (const auto& f : term.expr.factors) levels.insert(column_level(table, f.column, spec.keys));
        term.kind = levels.size() > 1 ? TermKind::CrossLevelInteraction : TermKind::WithinLevelInteraction;
      }
      spec.fixed.push_back(std::move(term));
    }
    for (const auto& l : shared_labels) {
      auto it = std::find_if(spec.fixed.begin(), spec.fixed.end(),
                             [&](const FixedTermSpec& t) { return t.expr.label() == l; });
      if (it == spec.fixed.end()) fail(ErrorKind::Config, "shared term '" + l + "' is not a declared fixed term");
      it->shared = true;
    }
  }
  for (const auto& [col, ref] : spec.reference_levels) {
    if (!table.has(col)) fail(ErrorKind::UnknownColumn, "reference level given for unknown column '" + col + "'");
    if (table.column(col).kind != ColumnKind::Categorical)
      fail(ErrorKind::Config, "reference level given for non-categorical column '" + col + "'");
  }

  // Random blocks.
  std::set<BlockLevel> g_levels;
  for (const auto* s : doc.with_prefix("random.")) {
    const std::string level = s->get("level").value_or(s->name.substr(7));
    if (level == "team") g_levels.insert(BlockLevel::Team);
    if (level == "facility") g_levels.insert(BlockLevel::Facility);
  }
  const double default_limit = 1.0 / static_cast<double>(g_levels.size() + 1);
  bool have_residual = false;
  std::set<std::string> block_names;
  for (const auto* s : doc.with_prefix("random.")) {
    RandomBlockSpec b = parse_block(*s, table, P, default_limit);
    if (!block_names.insert(b.name).second) fail(ErrorKind::Config, "random block '" + b.name + "' declared twice");
    if (b.level == BlockLevel::Residual) {
      if (have_residual) fail(ErrorKind::Config, "only one residual block is supported");
      have_residual = true;
      spec.residual = std::move(b);
    } else {
      spec.random.push_back(std::move(b));
    }
  }
  if (!have_residual) {
    spec.residual.name = "residual";
    spec.residual.level = BlockLevel::Residual;
    spec.residual.terms = {TermExpr::parse("intercept")};
    spec.residual.prior.limit = default_limit * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    spec.residual.prior.belief = static_cast<double>(P);
  }

  // Location prior.
  if (const auto* ps = doc.find("priors")) {
    check_keys(*ps, {"gamma_mean", "gamma_variance"}, {"gamma."});
    if (auto v = ps->get("gamma_mean")) spec.location_prior.mean = parse_double(*v, "gamma_mean");
    if (auto v = ps->get("gamma_variance")) spec.location_prior.variance = parse_double(*v, "gamma_variance");
    for (const auto* e : ps->with_prefix("gamma.")) {
      const auto parts = split_list(e->value);
      if (parts.size() != 2) fail(ErrorKind::Config, "'" + e->key + "' needs 'mean, variance'");
      const double var = parse_double(parts[1], e->key);
      if (!(var > 0)) fail(ErrorKind::ImproperPrior, "'" + e->key + "' variance must be positive");
      spec.location_prior.overrides[e->key.substr(6)] = {parse_double(parts[0], e->key), var};
    }
  }
  if (!(spec.location_prior.variance > 0))
    fail(ErrorKind::ImproperPrior, "gamma_variance must be positive");

  // Equality constraints, validated against the slots the fixed design will own.
  const auto coding = CategoricalCoding::from_table(table, spec.reference_levels);
  std::set<std::string> slots;
  if (spec.intercepts)
    for (const auto& r : spec.responses) slots.insert(r + ":intercept");
  for (const auto& t : spec.fixed) {
    if (t.shared) continue;
    std::vector<std::string> labels;
    if (t.expr.factors.size() == 1 && !t.expr.factors[0].level &&
        table.column(t.expr.factors[0].column).kind == ColumnKind::Categorical) {
      for (const auto& l : coding.levels.at(t.expr.factors[0].column))
        labels.push_back(t.expr.factors[0].column + "=" + l);
    } else {
      for (const auto& c : expand_term(t.expr, table.filter_rows(std::vector<bool>(table.n_rows, false)), coding))
        labels.push_back(c.label);
    }
    for (const auto& r : spec.responses)
      for (const auto& l : labels) slots.insert(r + ":" + l);
  }
  if (const auto* cs = doc.find("constraints")) {
    check_keys(*cs, {"equal"});
    for (const auto& v : cs->get_all("equal")) {
      EqualityConstraint c;
      for (const auto& slot : split_list(v)) {
        const auto colon = slot.find(':');
        std::string normalized = slot;
        if (colon != std::string::npos)
          normalized = slot.substr(0, colon) + ":" + TermExpr::parse(slot.substr(colon + 1)).label();
        if (!slots.contains(normalized))
          fail(ErrorKind::MissingSlot, "constraint references missing coefficient slot '" + slot + "'");
        c.slots.push_back(normalized);
      }
      if (c.slots.size() < 2) fail(ErrorKind::Config, "equality constraint needs at least two slots");
      spec.constraints.push_back(std::move(c));
    }
  }
  return spec;
}

}  // namespace mmglmm
