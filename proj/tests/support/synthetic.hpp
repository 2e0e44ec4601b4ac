#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fixture {

struct LinearData {
  std::string csv;
  Eigen::MatrixXd x;  // with leading intercept column
  Eigen::VectorXd y;
};

// y = X beta + N(0, sigma2), one subject per team and facility, covariates
// named x1..xk.
inline LinearData linear_data(std::size_t n, const std::vector<double>& beta, double sigma2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto k = static_cast<Eigen::Index>(beta.size());
  LinearData d;
  d.x.resize(static_cast<Eigen::Index>(n), k);
  d.y.resize(static_cast<Eigen::Index>(n));
  d.csv = "patient,team,facility";
  for (Eigen::Index j = 1; j < k; ++j) d.csv += ",x" + std::to_string(j);
  d.csv += ",y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.x(r, 0) = 1.0;
    double mu = beta[0];
    for (Eigen::Index j = 1; j < k; ++j) {
      d.x(r, j) = std::round(z(rng) * 1000.0) / 1000.0;
      mu += beta[static_cast<std::size_t>(j)] * d.x(r, j);
    }
    d.y(r) = std::round((mu + std::sqrt(sigma2) * z(rng)) * 1e6) / 1e6;
    d.csv += "p" + std::to_string(i) + ",t" + std::to_string(i) + ",f1";
    for (Eigen::Index j = 1; j < k; ++j) d.csv += "," + std::to_string(d.x(r, j));
    d.csv += "," + std::to_string(d.y(r)) + "\n";
  }
  return d;
}

inline std::string covariate_list(std::size_t k) {
  std::string s;
  for (std::size_t j = 1; j <= k; ++j) s += (j > 1 ? ", x" : "x") + std::to_string(j);
  return s;
}

}  // namespace fixture
