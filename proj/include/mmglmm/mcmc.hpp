#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmglmm/config.hpp"
#include "mmglmm/covariance.hpp"
#include "mmglmm/design.hpp"
#include "mmglmm/diagnostics.hpp"
#include "mmglmm/rng.hpp"

namespace mmglmm {

enum class SolverKind { Auto, Dense, Sparse };

struct McmcOptions {
  long iterations = 50000;
  long burnin = 10000;
  long thin = 25;
  std::size_t chains = 1;
  std::uint64_t seed = 1;
  double target_acceptance = 0.0;  // 0: 0.44 for one response, 0.23 for a block
  long adapt_window = 100;
  SolverKind solver = SolverKind::Auto;
  Eigen::Index dense_threshold = 500;
  bool parallel = true;
  bool store_effects = true;
  std::string snapshot_path;  // written on numeric abort when non-empty

  void validate() const;
  std::size_t stored_draws() const { return static_cast<std::size_t>((iterations - burnin) / thin); }
  bool stores(long iteration) const { return iteration > burnin && (iteration - burnin) % thin == 0; }
};

// Reads [mcmc]; absent keys keep their defaults.
McmcOptions mcmc_options_from_config(const ConfigDocument& doc, McmcOptions defaults = {});

// Column schema of a draw row: gamma slots, upper triangles of each G-side
// block, upper triangle of R, deviance.
struct DrawLayout {
  std::vector<std::string> columns;
  Eigen::Index gamma_begin = 0;
  Eigen::Index gamma_count = 0;
  std::vector<Eigen::Index> g_begin;
  std::vector<Eigen::Index> g_dim;
  Eigen::Index r_begin = 0;
  Eigen::Index r_dim = 0;
  Eigen::Index deviance_col = 0;

  static DrawLayout for_model(const ModelData& data);
  Eigen::Index size() const { return static_cast<Eigen::Index>(columns.size()); }
  Eigen::VectorXd pack(const Eigen::VectorXd& gamma, const std::vector<Eigen::MatrixXd>& g, const Eigen::MatrixXd& r,
                       double deviance) const;
  Eigen::VectorXd gamma(const Eigen::VectorXd& row) const { return row.segment(gamma_begin, gamma_count); }
  Eigen::MatrixXd g_block(const Eigen::VectorXd& row, std::size_t block) const;
  Eigen::MatrixXd r_block(const Eigen::VectorXd& row) const;
};

struct ChainState {
  Eigen::VectorXd gamma;
  Eigen::VectorXd eps;
  Eigen::VectorXd eta;  // latent predictor per stacked row
  std::vector<Eigen::MatrixXd> g;
  Eigen::MatrixXd r;
  long iteration = 0;
  Eigen::VectorXd mh_step;  // per response
  long mh_accepted = 0;
  long mh_proposed = 0;
};

ChainState initial_state(const ModelData& data);

struct ChainOutput {
  std::size_t chain = 0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd draws;    // stored draws x layout columns
  Eigen::MatrixXd effects;  // stored draws x W columns (empty unless stored)
  std::vector<long> iterations;
  // Posterior-mean accumulators for the deviance at the mean.
  Eigen::VectorXd sum_rho;
  Eigen::MatrixXd sum_r;
  Eigen::VectorXd sum_eta;
  double acceptance_rate = 0.0;  // post-burn-in MH acceptance (latent families)
  Eigen::VectorXd final_mh_step;

  std::vector<double> deviance(const DrawLayout& layout) const;
};

struct FitResult {
  DrawLayout layout;
  std::vector<ChainOutput> chains;
  McmcOptions options;
  DicSummary dic;

  // All chains' draws of one column, chain-major.
  std::vector<double> pooled(Eigen::Index column) const;
  std::size_t total_draws() const;
};

// Precomputed pieces shared by every iteration of a chain.
class LocationSampler {
 public:
  LocationSampler(const ModelData& data, const McmcOptions& options);
  ~LocationSampler();
  LocationSampler(const LocationSampler&) = delete;
  LocationSampler& operator=(const LocationSampler&) = delete;

  // Joint draw of rho = (gamma, eps) from its full conditional given G, R and
  // the working vector t.
  Eigen::VectorXd draw(const Eigen::VectorXd& t, const std::vector<Eigen::MatrixXd>& g, const Eigen::MatrixXd& r,
                       Rng& rng);
  // Posterior mean (A^{-1} M^T R^{-1} t with prior mean terms) for the same inputs.
  Eigen::VectorXd conditional_mean(const Eigen::VectorXd& t, const std::vector<Eigen::MatrixXd>& g,
                                   const Eigen::MatrixXd& r);
  bool uses_dense() const { return dense_; }
  Eigen::Index dimension() const { return dim_; }

 private:
  struct SparseFactor;
  void factor(const std::vector<Eigen::MatrixXd>& g, const Eigen::MatrixXd& r);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  [[noreturn]] void report_failure();

  const ModelData& data_;
  Eigen::SparseMatrix<double> m_;   // [X W], column-major
  Eigen::SparseMatrix<double> mt_;  // its transpose
  Eigen::VectorXd prior_mean_;
  Eigen::VectorXd prior_sd_;
  Eigen::Index q_ = 0;
  Eigen::Index dim_ = 0;
  bool dense_ = true;
  Eigen::SparseMatrix<double> a_;
  Eigen::MatrixXd dense_a_;
  Eigen::LLT<Eigen::MatrixXd> dense_llt_;
  std::unique_ptr<SparseFactor> sparse_;
  Eigen::SparseMatrix<double> r_inv_;
};

// Random-walk MH over each subject's block of latent predictors. Returns the
// number of accepted subject blocks. Step sizes are per response.
long update_latent(const ModelData& data, const Eigen::VectorXd& mean, ChainState& state, Rng& rng);

// min(1, ratio) for moving one subject's latent block to `proposal`.
double latent_acceptance_probability(const ModelData& data, std::size_t subject, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& r, const Eigen::VectorXd& current,
                                     const Eigen::VectorXd& proposal);

double state_deviance(const ModelData& data, const Eigen::VectorXd& rho, const Eigen::MatrixXd& r,
                      const Eigen::VectorXd& eta);

ChainOutput run_chain(const ModelData& data, const McmcOptions& options, std::size_t chain);

// Runs options.chains chains (threads unless options.parallel is false) and
// computes the pooled DIC.
FitResult run_chains(const ModelData& data, const McmcOptions& options);

}  // namespace mmglmm
