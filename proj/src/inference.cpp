#include "mmglmm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mmglmm/error.hpp"
#include "mmglmm/quantile.hpp"

namespace mmglmm {

std::array<double, 3> icc_proportions(double patient, double team, double facility) {
  if (!(patient > 0.0) || !(team > 0.0) || !(facility > 0.0))
    fail(ErrorKind::Domain, "ICC requires positive variances");
  const double total = patient + team + facility;
  return {patient / total, team / total, facility / total};
}

std::vector<PosteriorSummary> icc(const std::vector<double>& patient, const std::vector<double>& team,
                                  const std::vector<double>& facility, double prob) {
  if (patient.size() != team.size() || patient.size() != facility.size())
    fail(ErrorKind::Shape, "ICC variance draws must have equal length");
  std::array<std::vector<double>, 3> shares;
  for (std::size_t i = 0; i < patient.size(); ++i) {
    const auto s = icc_proportions(patient[i], team[i], facility[i]);
    for (std::size_t k = 0; k < 3; ++k) shares[k].push_back(s[k]);
  }
  static const char* names[] = {"patient", "team", "facility"};
  std::vector<PosteriorSummary> out;
  for (std::size_t k = 0; k < 3; ++k) {
    PosteriorSummary s = summarize_draws(names[k], shares[k], prob);
    s.marker.clear();
    out.push_back(s);
  }
  return out;
}

PosteriorDraws PosteriorDraws::from_fit(const FitResult& fit) {
  PosteriorDraws p;
  p.layout = fit.layout;
  const Eigen::Index n = static_cast<Eigen::Index>(fit.total_draws());
  p.draws.resize(n, fit.layout.size());
  const bool effects = !fit.chains.empty() && fit.chains.front().effects.size() > 0;
  if (effects) p.effects.resize(n, fit.chains.front().effects.cols());
  Eigen::Index row = 0;
  for (const auto& c : fit.chains) {
    p.draws.middleRows(row, c.draws.rows()) = c.draws;
    if (effects) p.effects.middleRows(row, c.effects.rows()) = c.effects;
    row += c.draws.rows();
  }
  return p;
}

std::vector<double> PosteriorDraws::column(Eigen::Index c) const {
  std::vector<double> v(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index i = 0; i < draws.rows(); ++i) v[static_cast<std::size_t>(i)] = draws(i, c);
  return v;
}

std::vector<double> PosteriorDraws::column(const std::string& name) const {
  const auto it = std::find(layout.columns.begin(), layout.columns.end(), name);
  if (it == layout.columns.end()) fail(ErrorKind::UnknownColumn, "no draw column '" + name + "'");
  return column(static_cast<Eigen::Index>(it - layout.columns.begin()));
}

std::vector<PosteriorSummary> summarize_effects(const PosteriorDraws& post, EffectScale scale, double prob) {
  if (post.size() == 0) fail(ErrorKind::UndefinedStatistic, "no draws to summarize");
  std::vector<PosteriorSummary> out;
  for (Eigen::Index c = post.layout.gamma_begin; c < post.layout.gamma_begin + post.layout.gamma_count; ++c) {
    const std::vector<double> v = post.column(c);
    PosteriorSummary s = summarize_draws(post.layout.columns[static_cast<std::size_t>(c)], v, prob);
    if (scale == EffectScale::Ratio) {
      // The interval is the exponentiated linear HPD, so it excludes 1 exactly
      // when the linear one excludes 0.
      std::vector<double> r = v;
      for (double& x : r) x = std::exp(x);
      const PosteriorSummary rs = summarize_draws(s.label, r, prob, 1.0);
      s.mean = rs.mean;
      s.sd = rs.sd;
      s.lower = std::exp(s.lower);
      s.upper = std::exp(s.upper);
    }
    out.push_back(s);
  }
  return out;
}

std::vector<PosteriorSummary> summarize_variances(const PosteriorDraws& post, double prob) {
  std::vector<PosteriorSummary> out;
  for (Eigen::Index c = post.layout.gamma_begin + post.layout.gamma_count; c < post.layout.deviance_col; ++c)
    out.push_back(summarize_draws(post.layout.columns[static_cast<std::size_t>(c)], post.column(c), prob));
  return out;
}

namespace {

const std::vector<std::string>& identifier_labels(const ObservationTable& table, const std::string& name) {
  const Column& c = table.column(name);
  if (c.kind == ColumnKind::Numeric) fail(ErrorKind::Schema, "grouping column '" + name + "' is not an identifier");
  return c.labels;
}

}  // namespace

PredictionTable predict_portfolio(const ModelData& data, const PosteriorDraws& post, const ObservationTable& table,
                                  bool include_random, double level, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::Domain, "prediction level must lie in (0, 1)");
  if (post.size() == 0) fail(ErrorKind::Prediction, "no posterior draws");
  const ModelSpec& spec = data.spec;
  const std::size_t P = data.n_responses();
  const std::size_t n = table.n_rows;
  const Eigen::Index N = post.size();
  const auto& patients = identifier_labels(table, spec.keys.patient);
  const auto& teams = identifier_labels(table, spec.keys.team);
  const auto& facilities = identifier_labels(table, spec.keys.facility);

  const StackedData stacked = stack_for_scoring(n, P);
  const FixedDesign fixed = build_fixed_design(spec, stacked, table, data.recipe, &patients, true);
  if (fixed.labels != data.fixed.labels) fail(ErrorKind::Prediction, "new rows produce a different fixed design");

  const bool have_effects = post.effects.cols() == data.random.cols() && post.effects.rows() == N;
  if (include_random && data.random.cols() > 0 && !have_effects)
    fail(ErrorKind::Prediction, "posterior effect draws are required for predictions with random effects");

  // Latent draws per stacked row, N x rows.
  Eigen::MatrixXd latent = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(stacked.size()));
  const Eigen::MatrixXd gamma = post.draws.middleCols(post.layout.gamma_begin, post.layout.gamma_count);
  for (Eigen::Index r = 0; r < fixed.X.outerSize(); ++r)
    for (SparseRowMatrix::InnerIterator it(fixed.X, r); it; ++it) latent.col(r) += it.value() * gamma.col(it.col());

  if (include_random) {
    Rng rng(seed);
    for (std::size_t k = 0; k < data.random.blocks.size(); ++k) {
      const auto& lay = data.random.blocks[k];
      const auto& block = spec.random[k];
      const Eigen::MatrixXd terms = evaluate_block_terms(block, table, data.recipe, &patients);
      const auto& labels = lay.level == BlockLevel::Facility ? facilities : teams;
      std::map<std::string, Eigen::Index> known;
      for (Eigen::Index g = 0; g < lay.groups; ++g) known[lay.group_labels[static_cast<std::size_t>(g)]] = g;
      std::map<std::string, Eigen::MatrixXd> fresh;  // label -> N x slots
      for (std::size_t i = 0; i < n; ++i) {
        const std::string& label = labels[i];
        const auto kit = known.find(label);
        const Eigen::MatrixXd* draws_new = nullptr;
        if (kit == known.end()) {
          auto [fit, inserted] = fresh.try_emplace(label);
          if (inserted) {
            fit->second.resize(N, lay.slots);
            for (Eigen::Index d = 0; d < N; ++d) {
              const KroneckerBlock kb{lay.name, block.shape, post.layout.g_block(post.draws.row(d).transpose(), k), 1};
              fit->second.row(d) = kb.sample(rng).transpose();
            }
          }
          draws_new = &fit->second;
        }
        for (std::size_t p = 0; p < P; ++p) {
          const Eigen::Index row = static_cast<Eigen::Index>(i * P + p);
          for (Eigen::Index t = 0; t < terms.cols(); ++t) {
            const double v = terms(static_cast<Eigen::Index>(i), t);
            if (v == 0.0) continue;
            const Eigen::Index slot = t * static_cast<Eigen::Index>(P) + static_cast<Eigen::Index>(p);
            if (draws_new)
              latent.col(row) += v * draws_new->col(slot);
            else
              latent.col(row) += v * post.effects.col(lay.offset + kit->second * lay.slots + slot);
          }
        }
      }
    }
  }

  PredictionTable out;
  out.responses = spec.responses;
  out.include_random = include_random;
  out.level = level;
  out.rows.reserve(stacked.size());
  const bool log_scale = spec.family.family != Family::Gaussian;
  std::vector<double> values(static_cast<std::size_t>(N));
  Eigen::MatrixXd r_diag(N, static_cast<Eigen::Index>(P));
  for (Eigen::Index d = 0; d < N; ++d) r_diag.row(d) = post.layout.r_block(post.draws.row(d).transpose()).diagonal().transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < P; ++p) {
      const Eigen::Index row = static_cast<Eigen::Index>(i * P + p);
      const double scale = data.recipe.response_scale[p];
      double point = 0.0;
      for (Eigen::Index d = 0; d < N; ++d) {
        const double mu = latent(d, row) * scale;
        values[static_cast<std::size_t>(d)] = mu;
        if (log_scale) {
          point += std::exp(mu + 0.5 * scale * scale * r_diag(d, static_cast<Eigen::Index>(p)));
        } else {
          point += mu;
        }
      }
      point /= static_cast<double>(N);
      std::sort(values.begin(), values.end());
      double lo = sorted_quantile(values, 0.5 * (1.0 - level));
      double hi = sorted_quantile(values, 0.5 * (1.0 + level));
      double med = sorted_quantile(values, 0.5);
      if (log_scale) {
        lo = std::exp(lo);
        hi = std::exp(hi);
        med = std::exp(med);
      }
      out.rows.push_back({patients[i], teams[i], facilities[i], p, point, lo, hi, med});
    }
  }
  return out;
}

Grouping parse_grouping(const std::string& name) {
  if (name == "team") return Grouping::Team;
  if (name == "facility") return Grouping::Facility;
  fail(ErrorKind::Usage, "unknown grouping '" + name + "' (team, facility)");
}

namespace {

const std::string& group_of(const PredictionRow& r, Grouping g) { return g == Grouping::Team ? r.team : r.facility; }

// Per subject: one value per response plus the total, in response order.
std::vector<std::vector<double>> per_subject(const PredictionTable& t) {
  const std::size_t P = t.responses.size();
  if (P == 0 || t.rows.empty() || t.rows.size() % P != 0) fail(ErrorKind::Prediction, "empty or ragged prediction table");
  std::vector<std::vector<double>> out(t.rows.size() / P, std::vector<double>(P + 1, 0.0));
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    out[k / P][k % P] = t.rows[k].point;
    out[k / P][P] += t.rows[k].point;
  }
  return out;
}

std::vector<std::string> response_names(const PredictionTable& t) {
  std::vector<std::string> names = t.responses;
  names.push_back("total");
  return names;
}

}  // namespace

std::vector<IndexRow> nis(const PredictionTable& with_random, Grouping grouping) {
  const auto values = per_subject(with_random);
  const auto names = response_names(with_random);
  const std::size_t P = with_random.responses.size();
  std::vector<IndexRow> out;
  for (std::size_t r = 0; r < names.size(); ++r) {
    std::vector<double> col;
    for (const auto& v : values) col.push_back(v[r]);
    const double median = quantile(col, 0.5);
    if (!(median != 0.0) || !std::isfinite(median))
      fail(ErrorKind::Domain, "median predicted workload of '" + names[r] + "' is zero");
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto& s = sums[group_of(with_random.rows[i * P], grouping)];
      s.first += values[i][r];
      s.second += 1;
    }
    for (const auto& [g, s] : sums)
      out.push_back({g, names[r], s.second, s.first / (static_cast<double>(s.second) * median), 0.0});
  }
  return out;
}

std::vector<IndexRow> rsur(const PredictionTable& with_random, const PredictionTable& without_random, Grouping grouping) {
  if (with_random.rows.size() != without_random.rows.size() || with_random.responses != without_random.responses)
    fail(ErrorKind::Prediction, "RSUR needs both prediction tables over identical subjects");
  const std::size_t P = with_random.responses.size();
  for (std::size_t k = 0; k < with_random.rows.size(); ++k)
    if (with_random.rows[k].subject != without_random.rows[k].subject)
      fail(ErrorKind::Prediction, "RSUR needs both prediction tables over identical subjects");
  const auto a = per_subject(with_random);
  const auto b = per_subject(without_random);
  const auto names = response_names(with_random);
  std::vector<IndexRow> out;
  for (std::size_t r = 0; r < names.size(); ++r) {
    std::map<std::string, std::array<double, 3>> sums;
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto& s = sums[group_of(with_random.rows[i * P], grouping)];
      s[0] += a[i][r];
      s[1] += b[i][r];
      s[2] += 1.0;
    }
    for (const auto& [g, s] : sums) {
      if (s[1] == 0.0) fail(ErrorKind::Domain, "RSUR denominator is zero for group '" + g + "'");
      out.push_back({g, names[r], static_cast<std::size_t>(s[2]), 0.0, s[0] / s[1]});
    }
  }
  return out;
}

IndexReport index_report(const PredictionTable& with_random, const PredictionTable& without_random, Grouping grouping) {
  IndexReport report;
  report.grouping = grouping;
  report.rows = nis(with_random, grouping);
  const auto r = rsur(with_random, without_random, grouping);
  for (std::size_t k = 0; k < report.rows.size(); ++k) report.rows[k].rsur = r[k].rsur;
  return report;
}

ModelLadder compare_models(const std::vector<LadderInput>& fits) {
  if (fits.size() < 2) fail(ErrorKind::Comparison, "a model ladder needs at least 2 fits");
  for (const auto& f : fits)
    if (f.data_hash != fits.front().data_hash)
      fail(ErrorKind::Comparison, "fit '" + f.label + "' was made on different data (hash " + f.data_hash + " vs " +
                                      fits.front().data_hash + ")");
  ModelLadder ladder;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    LadderEntry e{fits[k].label, fits[k].dic, std::nullopt, false};
    if (k > 0) {
      e.delta = fits[k].dic - fits[k - 1].dic;
      e.preferred = *e.delta < kDicPreferenceThreshold;
    }
    ladder.entries.push_back(e);
  }
  return ladder;
}

}  // namespace mmglmm
