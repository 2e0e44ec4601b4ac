#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmglmm/model_spec.hpp"
#include "mmglmm/rng.hpp"

namespace mmglmm {

inline constexpr double kVarianceFloor = 1e-12;

Eigen::MatrixXd kronecker_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Parametric P (d x d) times a structured identity over `groups` groups. The
// vector it covers is ordered group-major, so the materialized matrix is
// I_groups ⊗ P, a symmetric permutation of P ⊗ I_groups.
struct KroneckerBlock {
  std::string name;
  ParametricShape shape = ParametricShape::Unstructured;
  Eigen::MatrixXd parametric;
  Eigen::Index groups = 0;

  Eigen::Index parametric_dim() const { return parametric.rows(); }
  Eigen::Index dimension() const { return parametric.rows() * groups; }

  Eigen::MatrixXd materialize() const;
  // P with variances below the floor raised to it; used only for solves.
  Eigen::MatrixXd floored_parametric() const;
  Eigen::MatrixXd parametric_inverse() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double log_determinant() const;
  // Draw x ~ N(0, I_groups ⊗ P).
  Eigen::VectorXd sample(Rng& rng) const;
};

// Zero covariance between blocks; never materialized except on request.
struct CovarianceAssembly {
  std::vector<KroneckerBlock> blocks;

  Eigen::Index dimension() const;
  Eigen::MatrixXd materialize() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double log_determinant() const;
  Eigen::VectorXd sample(Rng& rng) const;
  // Block-diagonal inverse in sparse form, with the full dense pattern of
  // every parametric block kept (explicit zeros included).
  Eigen::SparseMatrix<double> inverse_sparse() const;
};

// Checks every block's P for SPD and, when given, each block's dimension
// against the expected widths of the design's block map.
CovarianceAssembly assemble_block_diagonal(std::vector<KroneckerBlock> blocks,
                                           const std::vector<Eigen::Index>& expected_dims = {});

// H = Phi^T S^{-1} Phi, Phi with one row per group and one column per slot.
Eigen::MatrixXd scatter_matrix(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& structured);
Eigen::MatrixXd scatter_matrix(const Eigen::MatrixXd& phi);

// Density proportional to |S|^-(df+d+1)/2 exp(-tr(scale S^-1)/2).
Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double df, Rng& rng);

// Full-conditional draw of a block's P given realized effects Phi (groups x
// slots): scale nu V + H and df nu + groups per independent slot subset.
Eigen::MatrixXd update_parametric_block(const RandomBlockSpec& block, std::size_t n_responses,
                                        const Eigen::MatrixXd& phi, Rng& rng);

bool is_spd(const Eigen::MatrixXd& m);

}  // namespace mmglmm
