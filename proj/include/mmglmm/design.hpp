#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmglmm/model_spec.hpp"
#include "mmglmm/table.hpp"

namespace mmglmm {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// One stacked row per (subject, response), subject-major. The dummy d_p of a
// row is 1 exactly for its own response.
struct StackedData {
  std::size_t n_subjects = 0;
  std::size_t n_responses = 0;
  std::vector<double> response;
  std::vector<std::size_t> subject;
  std::vector<std::size_t> response_index;

  std::size_t size() const { return response.size(); }
  double dummy(std::size_t row, std::size_t p) const { return response_index[row] == p ? 1.0 : 0.0; }
};

StackedData stack_multivariate(const ObservationTable& table, const std::vector<std::string>& responses);

// Stacked layout without response values, for scoring new rows.
StackedData stack_for_scoring(std::size_t n_subjects, std::size_t n_responses);

// Everything learned from the training table that scoring new rows needs.
struct DesignRecipe {
  CategoricalCoding coding;
  std::vector<double> response_scale;  // model-scale y = g(y) / scale
  // "<block>/<term>" -> (center, scale) for standardized slope covariates.
  std::map<std::string, std::pair<double, double>> slope_standardization;
  std::vector<std::string> teams;
  std::vector<std::string> facilities;

  const std::vector<std::string>& groups(BlockLevel level) const {
    return level == BlockLevel::Facility ? facilities : teams;
  }
};

DesignRecipe make_recipe(const ModelSpec& spec, const ObservationTable& table, const HierarchyIndex& hierarchy);

// Maps raw responses to the model scale (log for gaussian-log, then / scale).
double to_model_scale(const ModelSpec& spec, const DesignRecipe& recipe, std::size_t p, double y);

struct FixedDesign {
  SparseRowMatrix X;
  std::vector<std::string> labels;  // `gamma:<response>:<term>`
  std::vector<double> prior_mean;
  std::vector<double> prior_variance;

  Eigen::Index cols() const { return X.cols(); }
};

// With `scoring` set, all-zero and duplicate columns are accepted (new rows
// need not exercise every level).
FixedDesign build_fixed_design(const ModelSpec& spec, const StackedData& stacked, const ObservationTable& table,
                               const DesignRecipe& recipe, const std::vector<std::string>* row_labels = nullptr,
                               bool scoring = false);

struct RandomBlockLayout {
  std::string name;
  BlockLevel level = BlockLevel::Team;
  Eigen::Index offset = 0;  // first column in W
  Eigen::Index groups = 0;
  Eigen::Index slots = 0;
  std::vector<std::string> group_labels;
  std::vector<std::string> slot_labels;

  Eigen::Index width() const { return groups * slots; }
};

// Columns per block are group-major, then term, then response.
struct RandomDesign {
  SparseRowMatrix W;
  std::vector<RandomBlockLayout> blocks;
  std::vector<std::string> column_labels;

  Eigen::Index cols() const { return W.cols(); }
};

// Per-row values of every term of a block (standardized per the recipe).
Eigen::MatrixXd evaluate_block_terms(const RandomBlockSpec& block, const ObservationTable& table,
                                     const DesignRecipe& recipe, const std::vector<std::string>* row_labels = nullptr);

RandomDesign build_random_design(const ModelSpec& spec, const StackedData& stacked, const ObservationTable& table,
                                 const HierarchyIndex& hierarchy, const DesignRecipe& recipe,
                                 const std::vector<std::string>* row_labels = nullptr);

// The immutable bundle shared by every chain.
struct ModelData {
  ModelSpec spec;
  DesignRecipe recipe;
  StackedData stacked;
  Eigen::VectorXd y;  // model-scale stacked response
  FixedDesign fixed;
  RandomDesign random;
  std::vector<std::string> subject_labels;

  std::size_t n_subjects() const { return stacked.n_subjects; }
  std::size_t n_responses() const { return stacked.n_responses; }
};

ModelData build_model_data(const ModelSpec& spec, const ObservationTable& table, const HierarchyIndex& hierarchy);

// Writes X (dense, labeled) and W (coordinate triplets) as delimited text.
void dump_design(const ModelData& data, const std::string& directory);

}  // namespace mmglmm
