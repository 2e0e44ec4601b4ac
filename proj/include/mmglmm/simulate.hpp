#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmglmm/model_spec.hpp"
#include "mmglmm/table.hpp"

namespace mmglmm {

struct SimCovariate {
  std::string name;
  BlockLevel level = BlockLevel::Residual;  // Residual means patient level
  bool categorical = false;
  std::vector<std::string> levels;  // uniform over these when categorical
};

struct SimFixed {
  std::string response;
  std::string term;
  double value = 0.0;
};

struct SimBlock {
  std::string name;
  BlockLevel level = BlockLevel::Team;
  std::vector<std::string> terms;
  Eigen::MatrixXd parametric;  // slots term-major, response-minor
};

struct TruthRecord {
  std::uint64_t seed = 1;
  Family family = Family::Gaussian;
  std::size_t facilities = 1;
  std::size_t teams_per_facility = 1;
  std::size_t patients_per_team = 1;
  std::vector<std::string> responses;
  std::vector<SimCovariate> covariates;
  std::vector<SimFixed> fixed;
  std::vector<SimBlock> random;
  Eigen::MatrixXd residual;

  void validate() const;
  std::string to_json() const;
  static TruthRecord from_json(const std::string& text);
};

struct SimulatedData {
  ObservationTable table;
  HierarchyIndex hierarchy;
  std::string csv;                              // the table as written to disk
  Eigen::MatrixXd eta;                          // subjects x P, without residual
  Eigen::MatrixXd residuals;                    // subjects x P
  std::map<std::string, Eigen::MatrixXd> effects;  // block -> groups x slots
};

// Identifier columns are "patient", "team", "facility".
SimulatedData generate_dataset(const TruthRecord& truth);

// Response-scale mean outcome given the linear predictor without residual.
double true_mean_outcome(Family family, double eta, double residual_variance);

}  // namespace mmglmm
