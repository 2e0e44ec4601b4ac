#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mmglmm {

// -2 sum_i log N(y_i | mean_i, R) over subjects, each owning `P` consecutive
// stacked rows.
double gaussian_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& r);

// -2 sum log Poisson(y | exp(eta)).
double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta);

struct DicSummary {
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  double effective_parameters = 0.0;  // pD = mean deviance - deviance at mean
  double dic = 0.0;
};

double dic(const std::vector<double>& deviances, double deviance_at_mean);
DicSummary dic_summary(const std::vector<double>& deviances, double deviance_at_mean);

// Shortest window of the sorted draws holding ceil(prob * n) points; ties go
// to the lowest start.
std::pair<double, double> hpd_interval(std::vector<double> draws, double prob);

double gelman_rubin(const std::vector<std::vector<double>>& chains);

// Initial-positive-sequence estimator.
double effective_sample_size(const std::vector<double>& draws);

enum class QqFamily { Gaussian, Lognormal, Gamma };
QqFamily parse_qq_family(const std::string& name);
std::string to_string(QqFamily family);

struct QqPoint {
  double theoretical = 0.0;
  double sample = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct QqTable {
  QqFamily family = QqFamily::Gaussian;
  double param1 = 0.0;  // mean / log-mean / shape
  double param2 = 0.0;  // sd / log-sd / scale
  std::vector<QqPoint> points;

  double fraction_inside() const;
};

// ML fit, plotting positions (i - 0.5)/n, pointwise 95% envelope from
// parametric-bootstrap replicates of the fitted distribution.
QqTable qq_quantiles(const std::vector<double>& values, QqFamily family, std::size_t n_boot, std::uint64_t seed = 1);

struct PosteriorSummary {
  std::string label;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double prob = 0.95;
  std::string marker;  // "'" when the 95% HPD excludes the null, "\"" at 99.9%
};

std::string significance_marker(const std::vector<double>& draws, double null_value = 0.0);
PosteriorSummary summarize_draws(const std::string& label, const std::vector<double>& draws, double prob = 0.95,
                                 double null_value = 0.0);

}  // namespace mmglmm
