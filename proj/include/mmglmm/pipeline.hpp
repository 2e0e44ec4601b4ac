#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmglmm/config.hpp"
#include "mmglmm/design.hpp"
#include "mmglmm/inference.hpp"
#include "mmglmm/mcmc.hpp"

namespace mmglmm {

// Config + data text taken through ingestion, preprocessing, hierarchy,
// validation and design construction.
struct PreparedModel {
  ConfigDocument doc;
  ObservationTable table;
  HierarchyIndex hierarchy;
  ModelData data;
  std::string data_hash;
};

PreparedModel prepare_model(const std::string& config_text, const std::string& data_text);

// New rows to score, read with the training schema and preprocessing.
ObservationTable prepare_scoring_table(const PreparedModel& model, const std::string& data_text);

std::string draws_csv(const FitResult& fit);
std::string effects_csv(const FitResult& fit, const ModelData& data);
std::string fit_metadata_json(const FitResult& fit, const PreparedModel& model, const std::string& label);

// Writes draws.csv, effects.csv and fit.json into `directory`.
void write_fit(const std::string& directory, const FitResult& fit, const PreparedModel& model, const std::string& label);

struct StoredFit {
  std::string label;
  std::string data_hash;
  double dic = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  std::size_t chains = 0;
  std::vector<std::string> columns;  // draw columns without chain/iteration
  std::vector<std::size_t> chain;
  std::vector<long> iteration;
  Eigen::MatrixXd draws;
  std::vector<std::string> effect_columns;
  Eigen::MatrixXd effects;
  std::string metadata;  // fit.json verbatim

  // Draws of one column split by chain.
  std::vector<std::vector<double>> by_chain(std::size_t column) const;
};

StoredFit read_fit(const std::string& directory, bool with_effects = true);

// Checks the stored columns against the model's layout.
PosteriorDraws posterior_from_stored(const StoredFit& fit, const ModelData& data);

}  // namespace mmglmm
