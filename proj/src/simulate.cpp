#include "mmglmm/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "mmglmm/covariance.hpp"
#include "mmglmm/error.hpp"
#include "mmglmm/io.hpp"
#include "mmglmm/rng.hpp"
#include "mmglmm/terms.hpp"

namespace mmglmm {

namespace {

using nlohmann::json;

BlockLevel parse_level(const std::string& s) {
  if (s == "patient" || s == "residual") return BlockLevel::Residual;
  if (s == "team") return BlockLevel::Team;
  if (s == "facility") return BlockLevel::Facility;
  fail(ErrorKind::Config, "unknown level '" + s + "' (patient, team, facility)");
}

std::string level_name(BlockLevel l) {
  switch (l) {
    case BlockLevel::Residual: return "patient";
    case BlockLevel::Team: return "team";
    case BlockLevel::Facility: return "facility";
  }
  return "patient";
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(ErrorKind::Config, what + " must be a number or a non-empty matrix");
  const std::size_t n = j.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < n; ++i) {
    if (j[i].size() != j[0].size()) fail(ErrorKind::Config, what + " is ragged");
    for (std::size_t k = 0; k < j[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

std::string padded(char prefix, std::size_t value, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
  return buf;
}

}  // namespace

void TruthRecord::validate() const {
  if (facilities < 1 || teams_per_facility < 1 || patients_per_team < 1)
    fail(ErrorKind::Config, "simulation sizes must be at least 1");
  if (responses.empty()) fail(ErrorKind::Config, "simulation needs at least one response");
  const Eigen::Index P = static_cast<Eigen::Index>(responses.size());
  if (residual.rows() != P || residual.cols() != P)
    fail(ErrorKind::Shape, "residual matrix must be " + std::to_string(P) + "x" + std::to_string(P));
  if (!is_spd(residual)) fail(ErrorKind::NotPositiveDefinite, "residual matrix is not symmetric positive definite");
  for (const auto& b : random) {
    const Eigen::Index d = static_cast<Eigen::Index>(b.terms.size()) * P;
    if (b.level == BlockLevel::Residual) fail(ErrorKind::Config, "block '" + b.name + "' must be team or facility level");
    if (b.parametric.rows() != d || b.parametric.cols() != d)
      fail(ErrorKind::Shape, "block '" + b.name + "' parametric matrix must be " + std::to_string(d) + "x" +
                                 std::to_string(d));
    if (!is_spd(b.parametric))
      fail(ErrorKind::NotPositiveDefinite, "block '" + b.name + "' is not symmetric positive definite");
  }
  for (const auto& f : fixed)
    if (std::find(responses.begin(), responses.end(), f.response) == responses.end())
      fail(ErrorKind::Config, "fixed effect names unknown response '" + f.response + "'");
  for (const auto& c : covariates)
    if (c.categorical && c.levels.empty()) fail(ErrorKind::Config, "categorical covariate '" + c.name + "' has no levels");
}

std::string TruthRecord::to_json() const {
  json j;
  j["seed"] = seed;
  j["family"] = std::string(to_string(family));
  j["sizes"] = {{"facilities", facilities}, {"teams_per_facility", teams_per_facility},
                {"patients_per_team", patients_per_team}};
  j["responses"] = responses;
  j["covariates"] = json::array();
  for (const auto& c : covariates) {
    json cj = {{"name", c.name}, {"level", level_name(c.level)}, {"dist", c.categorical ? "categorical" : "normal"}};
    if (c.categorical) cj["levels"] = c.levels;
    j["covariates"].push_back(cj);
  }
  j["fixed"] = json::array();
  for (const auto& f : fixed) j["fixed"].push_back({{"response", f.response}, {"term", f.term}, {"value", f.value}});
  j["random"] = json::array();
  for (const auto& b : random)
    j["random"].push_back({{"name", b.name}, {"level", level_name(b.level)}, {"terms", b.terms}, {"P", matrix_json(b.parametric)}});
  j["residual"] = matrix_json(residual);
  return j.dump(2) + "\n";
}

TruthRecord TruthRecord::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("truth record is not valid JSON: ") + e.what());
  }
  TruthRecord t;
  try {
    t.seed = j.value("seed", std::uint64_t{1});
    t.family = parse_family(j.value("family", std::string("gaussian")));
    const json& s = j.at("sizes");
    t.facilities = s.at("facilities").get<std::size_t>();
    t.teams_per_facility = s.at("teams_per_facility").get<std::size_t>();
    t.patients_per_team = s.at("patients_per_team").get<std::size_t>();
    t.responses = j.at("responses").get<std::vector<std::string>>();
    for (const auto& c : j.value("covariates", json::array())) {
      SimCovariate sc;
      sc.name = c.at("name").get<std::string>();
      sc.level = parse_level(c.value("level", std::string("patient")));
      const std::string dist = c.value("dist", std::string("normal"));
      if (dist != "normal" && dist != "categorical")
        fail(ErrorKind::Config, "covariate '" + sc.name + "': unknown dist '" + dist + "' (normal, categorical)");
      sc.categorical = dist == "categorical";
      if (sc.categorical) sc.levels = c.at("levels").get<std::vector<std::string>>();
      t.covariates.push_back(sc);
    }
    for (const auto& f : j.value("fixed", json::array()))
      t.fixed.push_back({f.at("response").get<std::string>(), f.at("term").get<std::string>(), f.at("value").get<double>()});
    for (const auto& b : j.value("random", json::array())) {
      SimBlock sb;
      sb.name = b.at("name").get<std::string>();
      sb.level = parse_level(b.at("level").get<std::string>());
      sb.terms = b.at("terms").get<std::vector<std::string>>();
      sb.parametric = matrix_from_json(b.at("P"), "block '" + sb.name + "' P");
      t.random.push_back(sb);
    }
    t.residual = matrix_from_json(j.at("residual"), "residual");
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("truth record: ") + e.what());
  }
  t.validate();
  return t;
}

double true_mean_outcome(Family family, double eta, double residual_variance) {
  if (family == Family::Gaussian) return eta;
  return std::exp(eta + 0.5 * residual_variance);
}

SimulatedData generate_dataset(const TruthRecord& truth) {
  truth.validate();
  Rng rng(truth.seed);
  const std::size_t P = truth.responses.size();
  const std::size_t n_fac = truth.facilities;
  const std::size_t n_team = n_fac * truth.teams_per_facility;
  const std::size_t n = n_team * truth.patients_per_team;

  std::vector<std::string> fac_labels(n_fac);
  std::vector<std::string> team_labels(n_team);
  for (std::size_t f = 0; f < n_fac; ++f) fac_labels[f] = padded('F', f + 1, n_fac);
  for (std::size_t t = 0; t < n_team; ++t) team_labels[t] = padded('T', t + 1, n_team);

  // Covariate values per unit of their level.
  std::vector<std::vector<double>> num(truth.covariates.size());
  std::vector<std::vector<std::string>> cat(truth.covariates.size());
  std::map<std::string, Eigen::MatrixXd> effects;
  for (const auto& b : truth.random)
    effects[b.name] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b.level == BlockLevel::Facility ? n_fac : n_team),
                                            b.parametric.rows());
  auto draw_covariates = [&](BlockLevel level) {
    for (std::size_t c = 0; c < truth.covariates.size(); ++c) {
      const auto& cv = truth.covariates[c];
      if (cv.level != level) continue;
      if (cv.categorical) {
        std::uniform_int_distribution<std::size_t> u(0, cv.levels.size() - 1);
        cat[c].push_back(cv.levels[u(rng)]);
      } else {
        num[c].push_back(standard_normal(rng));
      }
    }
  };
  auto draw_effects = [&](BlockLevel level, std::size_t group) {
    for (const auto& b : truth.random) {
      if (b.level != level) continue;
      const KroneckerBlock kb{b.name, ParametricShape::Unstructured, b.parametric, 1};
      effects[b.name].row(static_cast<Eigen::Index>(group)) = kb.sample(rng).transpose();
    }
  };

  const KroneckerBlock resid{"residual", ParametricShape::Unstructured, truth.residual, 1};
  Eigen::MatrixXd residuals(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P));
  std::vector<std::size_t> row_team(n);
  std::vector<std::size_t> row_fac(n);
  std::size_t i = 0;
  for (std::size_t f = 0; f < n_fac; ++f) {
    draw_covariates(BlockLevel::Facility);
    draw_effects(BlockLevel::Facility, f);
    for (std::size_t tt = 0; tt < truth.teams_per_facility; ++tt) {
      const std::size_t t = f * truth.teams_per_facility + tt;
      draw_covariates(BlockLevel::Team);
      draw_effects(BlockLevel::Team, t);
      for (std::size_t k = 0; k < truth.patients_per_team; ++k, ++i) {
        draw_covariates(BlockLevel::Residual);
        residuals.row(static_cast<Eigen::Index>(i)) = resid.sample(rng).transpose();
        row_team[i] = t;
        row_fac[i] = f;
      }
    }
  }

  SimulatedData out;
  ObservationTable& table = out.table;
  table.n_rows = n;
  auto add_identifier = [&](const std::string& name, std::vector<std::string> labels) {
    Column c;
    c.kind = ColumnKind::Identifier;
    c.labels = std::move(labels);
    c.missing.assign(n, false);
    table.columns[name] = std::move(c);
    table.column_order.push_back(name);
  };
  std::vector<std::string> pl(n), tl(n), fl(n);
  for (std::size_t r = 0; r < n; ++r) {
    pl[r] = padded('P', r + 1, n);
    tl[r] = team_labels[row_team[r]];
    fl[r] = fac_labels[row_fac[r]];
  }
  add_identifier("patient", pl);
  add_identifier("team", tl);
  add_identifier("facility", fl);
  for (std::size_t c = 0; c < truth.covariates.size(); ++c) {
    const auto& cv = truth.covariates[c];
    Column col;
    col.kind = cv.categorical ? ColumnKind::Categorical : ColumnKind::Numeric;
    col.missing.assign(n, false);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t unit = cv.level == BlockLevel::Facility ? row_fac[r] : cv.level == BlockLevel::Team ? row_team[r] : r;
      if (cv.categorical)
        col.labels.push_back(cat[c][unit]);
      else
        col.numbers.push_back(num[c][unit]);
    }
    table.columns[cv.name] = std::move(col);
    table.column_order.push_back(cv.name);
  }

  const CategoricalCoding coding = CategoricalCoding::from_table(table, {});
  auto term_values = [&](const std::string& text) {
    const auto cols = expand_term(TermExpr::parse(text), table, coding);
    if (cols.size() != 1)
      fail(ErrorKind::Config, "simulation term '" + text + "' must name one column (use col=level for categoricals)");
    return cols.front().values;
  };

  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P));
  for (const auto& f : truth.fixed) {
    const auto p = static_cast<Eigen::Index>(
        std::find(truth.responses.begin(), truth.responses.end(), f.response) - truth.responses.begin());
    const auto v = term_values(f.term);
    for (std::size_t r = 0; r < n; ++r) eta(static_cast<Eigen::Index>(r), p) += f.value * v[r];
  }
  for (const auto& b : truth.random) {
    const Eigen::MatrixXd& u = effects[b.name];
    for (std::size_t t = 0; t < b.terms.size(); ++t) {
      const auto v = term_values(b.terms[t]);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t g = b.level == BlockLevel::Facility ? row_fac[r] : row_team[r];
        for (std::size_t p = 0; p < P; ++p)
          eta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) +=
              v[r] * u(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(t * P + p));
      }
    }
  }

  for (std::size_t p = 0; p < P; ++p) {
    Column col;
    col.kind = ColumnKind::Numeric;
    col.missing.assign(n, false);
    for (std::size_t r = 0; r < n; ++r) {
      const double lin = eta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) +
                         residuals(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p));
      double y = lin;
      if (truth.family == Family::GaussianLog) y = std::exp(lin);
      if (truth.family == Family::PoissonLog) {
        std::poisson_distribution<long> pois(std::exp(lin));
        y = static_cast<double>(pois(rng));
      }
      col.numbers.push_back(y);
    }
    table.columns[truth.responses[p]] = std::move(col);
    table.column_order.push_back(truth.responses[p]);
    table.response_columns.push_back(truth.responses[p]);
  }

  std::string csv;
  for (std::size_t c = 0; c < table.column_order.size(); ++c) csv += (c ? "," : "") + table.column_order[c];
  csv += '\n';
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < table.column_order.size(); ++c) {
      const Column& col = table.column(table.column_order[c]);
      if (c) csv += ',';
      csv += col.kind == ColumnKind::Numeric ? format_double(col.numbers[r]) : csv_escape(col.labels[r]);
    }
    csv += '\n';
  }
  out.csv = std::move(csv);
  out.hierarchy = build_hierarchy(table, HierarchyKeys{"patient", "team", "facility"});
  out.eta = std::move(eta);
  out.residuals = std::move(residuals);
  out.effects = std::move(effects);
  return out;
}

}  // namespace mmglmm
