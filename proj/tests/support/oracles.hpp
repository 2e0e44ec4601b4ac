#pragma once

// Straight-line reference computations used to check the library.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index k = 0; k < b.rows(); ++k)
        for (Eigen::Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

inline Eigen::MatrixXd product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

inline Eigen::MatrixXd random_spd(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + static_cast<double>(d) * Eigen::MatrixXd::Identity(d, d);
}

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Posterior of beta for y ~ N(X beta, sigma2 I), beta ~ N(0, prior_var I),
// via explicit inverses.
inline Gaussian gls_posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double sigma2, double prior_var) {
  const Eigen::MatrixXd precision =
      x.transpose() * x / sigma2 + Eigen::MatrixXd::Identity(x.cols(), x.cols()) / prior_var;
  const Eigen::MatrixXd cov = precision.fullPivLu().inverse();
  return {cov * x.transpose() * y / sigma2, cov};
}

inline std::vector<Eigen::VectorXd> sample_gaussian(const Gaussian& g, std::size_t n, std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::MatrixXd l = g.cov.llt().matrixL();
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(g.mean.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = z(rng);
    out.push_back(g.mean + l * v);
  }
  return out;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

// Critical value at alpha = 0.01 (asymptotic c(alpha) = 1.628).
inline double ks_critical_001(std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return 1.628 * std::sqrt((nn + mm) / (nn * mm));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Posterior mean of eta for y ~ Poisson(exp(eta)), eta ~ N(mu, s2), by a
// fine Riemann sum.
inline double poisson_normal_posterior_mean(double y, double mu, double s2) {
  double num = 0.0;
  double den = 0.0;
  const double h = 1e-4;
  for (double eta = mu - 12.0; eta <= mu + 12.0; eta += h) {
    const double w = std::exp(y * eta - std::exp(eta) - 0.5 * (eta - mu) * (eta - mu) / s2);
    num += eta * w;
    den += w;
  }
  return num / den;
}

// -2 log N(y | m, s2) summed term by term.
inline double gaussian_deviance_univariate(const std::vector<double>& y, const std::vector<double>& m, double s2) {
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    d += std::log(2.0 * std::numbers::pi * s2) + (y[i] - m[i]) * (y[i] - m[i]) / s2;
  return d;
}

// Empirical quantile by sorting and linear interpolation of order statistics.
inline double percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace oracle
