#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mmglmm/config.hpp"
#include "mmglmm/table.hpp"
#include "mmglmm/terms.hpp"

namespace mmglmm {

enum class Family { Gaussian, GaussianLog, PoissonLog };
enum class Link { Identity, Log };

// gaussian-log is fitted as a gaussian on log(y); poisson-log samples the
// latent predictor by Metropolis-Hastings.
struct FamilySpec {
  Family family = Family::Gaussian;
  Link link = Link::Identity;
  bool estimate_dispersion = true;

  bool latent_is_observed() const { return family != Family::PoissonLog; }
};

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

enum class TermKind { Main, WithinLevelInteraction, CrossLevelInteraction, Transform };

struct FixedTermSpec {
  TermExpr expr;
  TermKind kind = TermKind::Main;
  bool shared = false;  // one coefficient across responses instead of one per response
};

enum class BlockLevel { Residual, Team, Facility };
std::string_view to_string(BlockLevel level);

enum class ParametricShape { Unstructured, Diagonal, Scalar };
std::string_view to_string(ParametricShape shape);

// Inverse-Wishart hyperparameters as a limit covariance V and a degree of
// belief nu; the scale matrix handed to the sampler is nu * V.
struct IwPrior {
  Eigen::MatrixXd limit;
  double belief = 0.0;

  Eigen::MatrixXd scale() const { return belief * limit; }
};

struct RandomBlockSpec {
  std::string name;
  BlockLevel level = BlockLevel::Team;
  std::vector<TermExpr> terms;  // residual blocks carry a single intercept
  ParametricShape shape = ParametricShape::Unstructured;
  bool joint_responses = true;  // false: responses kept independent
  IwPrior prior;                // over all slots (term-major, response-minor)
  bool fixed = false;           // hold P at the prior limit instead of sampling
  bool center_scale = true;     // standardize numeric slope covariates

  std::size_t slot_count(std::size_t n_responses) const { return terms.size() * n_responses; }
  // #terms x #responses when responses are joint, #terms when independent.
  std::size_t parametric_dim(std::size_t n_responses) const {
    return joint_responses ? terms.size() * n_responses : terms.size();
  }
  // Independent slot subsets of the parametric matrix.
  std::vector<std::vector<int>> partition(std::size_t n_responses) const;
  std::vector<std::string> slot_labels(const std::vector<std::string>& responses) const;
};

struct LocationPrior {
  double mean = 0.0;
  double variance = 1e10;
  std::map<std::string, std::pair<double, double>> overrides;  // slot label -> (mean, variance)
};

// Coefficient slots `response:term` forced equal.
struct EqualityConstraint {
  std::vector<std::string> slots;
};

struct ModelSpec {
  std::vector<std::string> responses;
  FamilySpec family;
  bool intercepts = true;
  std::vector<FixedTermSpec> fixed;
  std::map<std::string, std::string> reference_levels;
  std::vector<RandomBlockSpec> random;  // G-side, declaration order
  RandomBlockSpec residual;
  LocationPrior location_prior;
  std::vector<EqualityConstraint> constraints;
  bool scale_responses = false;
  HierarchyKeys keys;

  std::size_t n_responses() const { return responses.size(); }
};

// Sections of the config consumed before the model itself is validated.
TableSchema schema_from_config(const ConfigDocument& doc);
PreprocessRules preprocess_from_config(const ConfigDocument& doc);
HierarchyKeys keys_from_config(const ConfigDocument& doc);

ModelSpec parse_model_config(std::string_view text, const ObservationTable& table);
ModelSpec parse_model_config(const ConfigDocument& doc, const ObservationTable& table);

bool is_symmetric_positive_definite(const Eigen::MatrixXd& m);

}  // namespace mmglmm
