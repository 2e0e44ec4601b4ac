#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmglmm/design.hpp"
#include "mmglmm/diagnostics.hpp"
#include "mmglmm/mcmc.hpp"

namespace mmglmm {

// Variance shares (patient, team, facility) of one response.
std::array<double, 3> icc_proportions(double patient, double team, double facility);

// Per-draw shares summarized by mean and HPD, labelled patient/team/facility.
std::vector<PosteriorSummary> icc(const std::vector<double>& patient, const std::vector<double>& team,
                                  const std::vector<double>& facility, double prob = 0.95);

enum class EffectScale { Linear, Ratio };

// Draws pooled over chains, chain-major.
struct PosteriorDraws {
  DrawLayout layout;
  Eigen::MatrixXd draws;
  Eigen::MatrixXd effects;

  static PosteriorDraws from_fit(const FitResult& fit);
  std::vector<double> column(Eigen::Index c) const;
  std::vector<double> column(const std::string& name) const;
  Eigen::Index size() const { return draws.rows(); }
};

// Ratio scale exponentiates each draw; significance is judged against 1.
std::vector<PosteriorSummary> summarize_effects(const PosteriorDraws& post, EffectScale scale, double prob = 0.95);

// Summaries of every G/R entry in natural scale.
std::vector<PosteriorSummary> summarize_variances(const PosteriorDraws& post, double prob = 0.95);

struct PredictionRow {
  std::string subject;
  std::string team;
  std::string facility;
  std::size_t response = 0;
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double median = 0.0;
};

struct PredictionTable {
  std::vector<std::string> responses;
  bool include_random = true;
  double level = 0.95;
  std::vector<PredictionRow> rows;  // subject-major, response-minor

  std::size_t n_subjects() const { return responses.empty() ? 0 : rows.size() / responses.size(); }
};

// Response-scale posterior of each subject's mean outcome. Groups unknown to
// the fit receive fresh effects drawn from each draw's G.
PredictionTable predict_portfolio(const ModelData& data, const PosteriorDraws& post, const ObservationTable& table,
                                  bool include_random, double level, std::uint64_t seed = 1);

enum class Grouping { Team, Facility };
Grouping parse_grouping(const std::string& name);

struct IndexRow {
  std::string group;
  std::string response;  // a response name or "total"
  std::size_t subjects = 0;
  double nis = 0.0;
  double rsur = 0.0;
};

struct IndexReport {
  Grouping grouping = Grouping::Facility;
  std::vector<IndexRow> rows;
};

// Per group and response: sum of predictions / (n_group x median over all
// subjects), and sum with random effects / sum without.
std::vector<IndexRow> nis(const PredictionTable& with_random, Grouping grouping);
std::vector<IndexRow> rsur(const PredictionTable& with_random, const PredictionTable& without_random, Grouping grouping);
IndexReport index_report(const PredictionTable& with_random, const PredictionTable& without_random, Grouping grouping);

struct LadderInput {
  std::string label;
  double dic = 0.0;
  std::string data_hash;
};

struct LadderEntry {
  std::string label;
  double dic = 0.0;
  std::optional<double> delta;  // vs the previous entry
  bool preferred = false;
};

struct ModelLadder {
  std::vector<LadderEntry> entries;
};

inline constexpr double kDicPreferenceThreshold = -10.0;

ModelLadder compare_models(const std::vector<LadderInput>& fits);

}  // namespace mmglmm
