#include "mmglmm/covariance.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"

namespace mmglmm {

Eigen::MatrixXd kronecker_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd KroneckerBlock::materialize() const {
  return kronecker_product(Eigen::MatrixXd::Identity(groups, groups), parametric);
}

Eigen::MatrixXd KroneckerBlock::floored_parametric() const {
  Eigen::MatrixXd p = parametric;
  for (Eigen::Index k = 0; k < p.rows(); ++k)
    if (p(k, k) < kVarianceFloor) {
      spdlog::warn("block '{}': variance {} below floor {}; clamped for the solve", name, p(k, k), kVarianceFloor);
      p(k, k) = kVarianceFloor;
    }
  return p;
}

Eigen::MatrixXd KroneckerBlock::parametric_inverse() const {
  const Eigen::MatrixXd p = floored_parametric();
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "block '" + name + "' covariance is not positive definite");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p.rows(), p.cols()));
  return 0.5 * (inv + inv.transpose());
}

Eigen::VectorXd KroneckerBlock::solve(const Eigen::VectorXd& b) const {
  if (b.size() != dimension()) fail(ErrorKind::Shape, "block '" + name + "': solve dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(floored_parametric());
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "block '" + name + "' covariance is not positive definite");
  const Eigen::Index d = parametric_dim();
  Eigen::Map<const Eigen::MatrixXd> rhs(b.data(), d, groups);
  Eigen::VectorXd out(b.size());
  Eigen::Map<Eigen::MatrixXd>(out.data(), d, groups) = llt.solve(rhs);
  return out;
}

double KroneckerBlock::log_determinant() const {
  Eigen::LLT<Eigen::MatrixXd> llt(floored_parametric());
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "block '" + name + "' covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  return 2.0 * static_cast<double>(groups) * l.diagonal().array().log().sum();
}

Eigen::VectorXd KroneckerBlock::sample(Rng& rng) const {
  Eigen::LLT<Eigen::MatrixXd> llt(floored_parametric());
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "block '" + name + "' covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::Index d = parametric_dim();
  Eigen::MatrixXd z(d, groups);
  for (Eigen::Index g = 0; g < groups; ++g)
    for (Eigen::Index k = 0; k < d; ++k) z(k, g) = standard_normal(rng);
  Eigen::MatrixXd x = l * z;
  return Eigen::Map<Eigen::VectorXd>(x.data(), x.size());
}

Eigen::Index CovarianceAssembly::dimension() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.dimension();
  return n;
}

Eigen::MatrixXd CovarianceAssembly::materialize() const {
  const Eigen::Index n = dimension();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    out.block(off, off, b.dimension(), b.dimension()) = b.materialize();
    off += b.dimension();
  }
  return out;
}

Eigen::VectorXd CovarianceAssembly::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != dimension()) fail(ErrorKind::Shape, "assembly solve dimension mismatch");
  Eigen::VectorXd out(rhs.size());
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    out.segment(off, b.dimension()) = b.solve(rhs.segment(off, b.dimension()));
    off += b.dimension();
  }
  return out;
}

double CovarianceAssembly::log_determinant() const {
  double s = 0.0;
  for (const auto& b : blocks) s += b.log_determinant();
  return s;
}

Eigen::VectorXd CovarianceAssembly::sample(Rng& rng) const {
  Eigen::VectorXd out(dimension());
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    out.segment(off, b.dimension()) = b.sample(rng);
    off += b.dimension();
  }
  return out;
}

Eigen::SparseMatrix<double> CovarianceAssembly::inverse_sparse() const {
  std::vector<Eigen::Triplet<double>> t;
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    const Eigen::MatrixXd inv = b.parametric_inverse();
    const Eigen::Index d = b.parametric_dim();
    for (Eigen::Index g = 0; g < b.groups; ++g)
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) t.emplace_back(off + g * d + i, off + g * d + j, inv(i, j));
    off += b.dimension();
  }
  Eigen::SparseMatrix<double> m(off, off);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

CovarianceAssembly assemble_block_diagonal(std::vector<KroneckerBlock> blocks,
                                           const std::vector<Eigen::Index>& expected_dims) {
  if (!expected_dims.empty() && expected_dims.size() != blocks.size())
    fail(ErrorKind::Assembly, "assembly has " + std::to_string(blocks.size()) + " blocks, design has " +
                                  std::to_string(expected_dims.size()));
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (!is_spd(b.parametric)) fail(ErrorKind::NotPositiveDefinite, "block '" + b.name + "' is not symmetric positive definite");
    if (!expected_dims.empty() && b.dimension() != expected_dims[k])
      fail(ErrorKind::Assembly, "block '" + b.name + "' has dimension " + std::to_string(b.dimension()) +
                                    " but the design expects " + std::to_string(expected_dims[k]));
  }
  return CovarianceAssembly{std::move(blocks)};
}

Eigen::MatrixXd scatter_matrix(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& structured) {
  if (structured.rows() != phi.rows() || structured.cols() != phi.rows())
    fail(ErrorKind::Shape, "scatter: Phi has " + std::to_string(phi.rows()) + " rows but S is " +
                               std::to_string(structured.rows()) + "x" + std::to_string(structured.cols()));
  Eigen::LLT<Eigen::MatrixXd> llt(structured);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "structured matrix is not positive definite");
  Eigen::MatrixXd h = phi.transpose() * llt.solve(phi);
  return 0.5 * (h + h.transpose());
}

Eigen::MatrixXd scatter_matrix(const Eigen::MatrixXd& phi) { return phi.transpose() * phi; }

Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double df, Rng& rng) {
  const Eigen::Index d = scale.rows();
  if (!is_spd(scale)) fail(ErrorKind::Numeric, "inverse-Wishart scale is not symmetric positive definite");
  if (!(df > static_cast<double>(d) - 1.0))
    fail(ErrorKind::ImproperPrior, "inverse-Wishart df " + std::to_string(df) + " must exceed dimension - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  const Eigen::MatrixXd u = llt.matrixL();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi(df - static_cast<double>(i));
    a(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = standard_normal(rng);
  }
  // Sigma^{-1} = U^{-T} A A^T U^{-1} is Wishart(scale^{-1}, df).
  const Eigen::MatrixXd b = a.triangularView<Eigen::Lower>().transpose().solve<Eigen::OnTheRight>(u);
  Eigen::MatrixXd sigma = b * b.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  if (!is_spd(sigma)) fail(ErrorKind::Numeric, "inverse-Wishart draw is not positive definite");
  return sigma;
}

Eigen::MatrixXd update_parametric_block(const RandomBlockSpec& block, std::size_t n_responses,
                                        const Eigen::MatrixXd& phi, Rng& rng) {
  const Eigen::Index slots = static_cast<Eigen::Index>(block.slot_count(n_responses));
  if (phi.cols() != slots)
    fail(ErrorKind::Shape, "block '" + block.name + "': Phi has " + std::to_string(phi.cols()) + " columns, expected " +
                               std::to_string(slots));
  if (block.fixed) return block.prior.limit;
  const Eigen::MatrixXd h = scatter_matrix(phi);
  const double g = static_cast<double>(phi.rows());
  const double nu = block.prior.belief;
  const Eigen::MatrixXd& v = block.prior.limit;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(slots, slots);

  if (block.shape == ParametricShape::Scalar) {
    Eigen::MatrixXd psi(1, 1);
    psi(0, 0) = nu * v.diagonal().mean() + h.trace();
    const double s = sample_inverse_wishart(psi, nu + g * static_cast<double>(slots), rng)(0, 0);
    return s * Eigen::MatrixXd::Identity(slots, slots);
  }
  for (const auto& subset : block.partition(n_responses)) {
    const Eigen::Index k = static_cast<Eigen::Index>(subset.size());
    Eigen::MatrixXd psi(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) psi(i, j) = nu * v(subset[i], subset[j]) + h(subset[i], subset[j]);
    const Eigen::MatrixXd draw = sample_inverse_wishart(psi, nu + g, rng);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) out(subset[i], subset[j]) = draw(i, j);
  }
  return out;
}

}  // namespace mmglmm
