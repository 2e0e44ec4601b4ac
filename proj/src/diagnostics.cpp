#include "mmglmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "mmglmm/error.hpp"
#include "mmglmm/quantile.hpp"

namespace mmglmm {

double gaussian_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& r) {
  const Eigen::Index p = r.rows();
  if (y.size() != mean.size() || p == 0 || y.size() % p != 0) fail(ErrorKind::Shape, "deviance: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numeric, "deviance: residual covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const Eigen::Index n = y.size() / p;
  Eigen::MatrixXd e(p, n);
  Eigen::Map<Eigen::MatrixXd>(e.data(), p, n) = Eigen::Map<const Eigen::MatrixXd>(y.data(), p, n) -
                                                 Eigen::Map<const Eigen::MatrixXd>(mean.data(), p, n);
  const Eigen::MatrixXd z = l.triangularView<Eigen::Lower>().solve(e);
  const double quad = z.squaredNorm();
  const double d = static_cast<double>(n) * (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + logdet) + quad;
  if (!std::isfinite(d)) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite(z.col(i).squaredNorm()))
        fail(ErrorKind::Numeric, "non-finite gaussian density at subject row " + std::to_string(i));
    fail(ErrorKind::Numeric, "non-finite gaussian deviance");
  }
  return d;
}

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  if (y.size() != eta.size()) fail(ErrorKind::Shape, "deviance: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double lp = y(i) * eta(i) - std::exp(eta(i)) - std::lgamma(y(i) + 1.0);
    if (!std::isfinite(lp)) fail(ErrorKind::Numeric, "non-finite Poisson density at stacked row " + std::to_string(i));
    s += lp;
  }
  return -2.0 * s;
}

DicSummary dic_summary(const std::vector<double>& deviances, double deviance_at_mean) {
  if (deviances.empty()) fail(ErrorKind::UndefinedStatistic, "DIC of an empty deviance trace");
  DicSummary s;
  s.mean_deviance = std::accumulate(deviances.begin(), deviances.end(), 0.0) / static_cast<double>(deviances.size());
  s.deviance_at_mean = deviance_at_mean;
  s.effective_parameters = s.mean_deviance - deviance_at_mean;
  s.dic = 2.0 * s.mean_deviance - deviance_at_mean;
  return s;
}

double dic(const std::vector<double>& deviances, double deviance_at_mean) {
  return dic_summary(deviances, deviance_at_mean).dic;
}

std::pair<double, double> hpd_interval(std::vector<double> draws, double prob) {
  const std::size_t n = draws.size();
  if (n < 2) fail(ErrorKind::UndefinedStatistic, "HPD interval needs at least 2 draws");
  if (!(prob > 0.0 && prob < 1.0)) fail(ErrorKind::Domain, "HPD probability must lie in (0, 1)");
  std::sort(draws.begin(), draws.end());
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(prob * static_cast<double>(n) - 1e-9)));
  std::size_t best = 0;
  double width = draws[k - 1] - draws[0];
  for (std::size_t i = 1; i + k <= n; ++i) {
    const double w = draws[i + k - 1] - draws[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {draws[best], draws[best + k - 1]};
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) fail(ErrorKind::UndefinedStatistic, "Gelman-Rubin needs at least 2 chains");
  const std::size_t n = chains.front().size();
  if (n < 4) fail(ErrorKind::UndefinedStatistic, "Gelman-Rubin needs chains of length >= 4");
  for (const auto& c : chains)
    if (c.size() != n) fail(ErrorKind::Shape, "Gelman-Rubin chains must have equal length");
  const double m = static_cast<double>(chains.size());
  const double nn = static_cast<double>(n);
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    means.push_back(mu);
    w += variance_of(c, mu);
  }
  w /= m;
  if (!(w > 0.0)) fail(ErrorKind::UndefinedStatistic, "Gelman-Rubin undefined: zero within-chain variance");
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nn / (m - 1.0);
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

double effective_sample_size(const std::vector<double>& draws) {
  const std::size_t n = draws.size();
  if (n < 10) fail(ErrorKind::UndefinedStatistic, "ESS needs at least 10 draws");
  const double mu = mean_of(draws);
  std::vector<double> c(draws.size());
  for (std::size_t i = 0; i < n; ++i) c[i] = draws[i] - mu;
  const double c0 = std::inner_product(c.begin(), c.end(), c.begin(), 0.0) / static_cast<double>(n);
  if (!(c0 > 0.0)) fail(ErrorKind::UndefinedStatistic, "ESS undefined for a constant sequence");
  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n) / c0;
  };
  // Paired sums Gamma_m = rho(2m) + rho(2m+1), truncated at the first
  // non-positive pair.
  double sum_pairs = 0.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double g = rho(2 * m) + rho(2 * m + 1);
    if (g <= 0.0) break;
    sum_pairs += g;
  }
  double tau = -1.0 + 2.0 * sum_pairs;
  const double nn = static_cast<double>(n);
  tau = std::max(tau, 1.0 / std::log10(nn));
  return nn / tau;
}

QqFamily parse_qq_family(const std::string& name) {
  if (name == "gaussian" || name == "normal") return QqFamily::Gaussian;
  if (name == "lognormal") return QqFamily::Lognormal;
  if (name == "gamma") return QqFamily::Gamma;
  fail(ErrorKind::Usage, "unknown QQ family '" + name + "' (gaussian, lognormal, gamma)");
}

std::string to_string(QqFamily family) {
  switch (family) {
    case QqFamily::Gaussian: return "gaussian";
    case QqFamily::Lognormal: return "lognormal";
    case QqFamily::Gamma: return "gamma";
  }
  return "gaussian";
}

double QqTable::fraction_inside() const {
  if (points.empty()) return 0.0;
  std::size_t in = 0;
  for (const auto& p : points)
    if (p.sample >= p.lower && p.sample <= p.upper) ++in;
  return static_cast<double>(in) / static_cast<double>(points.size());
}

namespace {

struct Fit {
  double a = 0.0;
  double b = 0.0;
};

Fit ml_fit(const std::vector<double>& v, QqFamily family) {
  const double n = static_cast<double>(v.size());
  if (family == QqFamily::Gaussian) {
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return {mu, std::sqrt(ss / n)};
  }
  if (family == QqFamily::Lognormal) {
    std::vector<double> l;
    for (double x : v) l.push_back(std::log(x));
    return ml_fit(l, QqFamily::Gaussian);
  }
  // Gamma shape by Newton on log(k) - digamma(k) = log(mean) - mean(log).
  const double mu = mean_of(v);
  double mlog = 0.0;
  for (double x : v) mlog += std::log(x);
  mlog /= n;
  const double s = std::log(mu) - mlog;
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 50; ++it) {
    const double f = std::log(k) - boost::math::digamma(k) - s;
    const double df = 1.0 / k - boost::math::trigamma(k);
    const double step = f / df;
    k -= step;
    if (k <= 0) k = 1e-6;
    if (std::abs(step) < 1e-12 * k) break;
  }
  return {k, mu / k};
}

double fitted_quantile(QqFamily family, const Fit& f, double p) {
  switch (family) {
    case QqFamily::Gaussian: return boost::math::quantile(boost::math::normal(f.a, f.b), p);
    case QqFamily::Lognormal: return boost::math::quantile(boost::math::lognormal(f.a, f.b), p);
    case QqFamily::Gamma: return boost::math::quantile(boost::math::gamma_distribution<>(f.a, f.b), p);
  }
  return 0.0;
}

double fitted_sample(QqFamily family, const Fit& f, std::mt19937_64& rng) {
  switch (family) {
    case QqFamily::Gaussian: return std::normal_distribution<double>(f.a, f.b)(rng);
    case QqFamily::Lognormal: return std::lognormal_distribution<double>(f.a, f.b)(rng);
    case QqFamily::Gamma: return std::gamma_distribution<double>(f.a, f.b)(rng);
  }
  return 0.0;
}

}  // namespace

QqTable qq_quantiles(const std::vector<double>& values, QqFamily family, std::size_t n_boot, std::uint64_t seed) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::Support, "QQ input contains a non-finite value");
    if (family != QqFamily::Gaussian && !(v > 0.0))
      fail(ErrorKind::Support, "value " + std::to_string(v) + " is outside the support of the " + to_string(family) +
                                   " family");
  }
  if (values.size() < 20) fail(ErrorKind::UndefinedStatistic, "QQ data needs at least 20 values");
  if (n_boot < 2) fail(ErrorKind::Usage, "QQ envelope needs at least 2 bootstrap replicates");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const Fit fit = ml_fit(sorted, family);
  if (!(fit.b > 0.0)) fail(ErrorKind::Support, "QQ fit is degenerate (zero spread)");
  const std::size_t n = sorted.size();

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> per_point(n, std::vector<double>(n_boot));
  std::vector<double> rep(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (auto& x : rep) x = fitted_sample(family, fit, rng);
    std::sort(rep.begin(), rep.end());
    for (std::size_t i = 0; i < n; ++i) per_point[i][b] = rep[i];
  }

  QqTable table;
  table.family = family;
  table.param1 = fit.a;
  table.param2 = fit.b;
  table.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& env = per_point[i];
    std::sort(env.begin(), env.end());
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    table.points.push_back({fitted_quantile(family, fit, p), sorted[i], sorted_quantile(env, 0.025),
                            sorted_quantile(env, 0.975)});
  }
  return table;
}

std::string significance_marker(const std::vector<double>& draws, double null_value) {
  const auto [lo999, hi999] = hpd_interval(draws, 0.999);
  if (null_value < lo999 || null_value > hi999) return "\"";
  const auto [lo, hi] = hpd_interval(draws, 0.95);
  if (null_value < lo || null_value > hi) return "'";
  return "";
}

PosteriorSummary summarize_draws(const std::string& label, const std::vector<double>& draws, double prob,
                                 double null_value) {
  if (draws.size() < 2) fail(ErrorKind::UndefinedStatistic, "summary of '" + label + "' needs at least 2 draws");
  PosteriorSummary s;
  s.label = label;
  s.mean = mean_of(draws);
  s.sd = std::sqrt(variance_of(draws, s.mean));
  std::tie(s.lower, s.upper) = hpd_interval(draws, prob);
  s.prob = prob;
  s.marker = significance_marker(draws, null_value);
  return s;
}

}  // namespace mmglmm
