#include "mmglmm/mcmc.hpp"

#include <cmath>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"
#include "mmglmm/io.hpp"

namespace mmglmm {

void McmcOptions::validate() const {
  if (iterations < 1) fail(ErrorKind::Config, "iterations must be at least 1");
  if (burnin < 0 || burnin >= iterations) fail(ErrorKind::Config, "burn-in must satisfy 0 <= burnin < iterations");
  if (thin < 1) fail(ErrorKind::Config, "thin must be at least 1");
  if (chains < 1) fail(ErrorKind::Config, "chains must be at least 1");
  if (stored_draws() < 1) fail(ErrorKind::Config, "options store no draws: (iterations - burnin) / thin < 1");
  if (adapt_window < 1) fail(ErrorKind::Config, "adapt_window must be at least 1");
  if (target_acceptance < 0.0 || target_acceptance >= 1.0) fail(ErrorKind::Config, "target_acceptance must lie in [0, 1)");
}

McmcOptions mcmc_options_from_config(const ConfigDocument& doc, McmcOptions o) {
  const ConfigSection* s = doc.find("mcmc");
  if (!s) return o;
  static const std::set<std::string> known = {"iterations", "burnin", "thin", "chains", "seed",
                                              "adapt_window", "solver", "dense_threshold", "target_acceptance"};
  for (const auto& e : s->entries)
    if (!known.contains(e.key))
      fail(ErrorKind::Config, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [mcmc]");
  if (auto v = s->get("iterations")) o.iterations = parse_integer(*v, "iterations");
  if (auto v = s->get("burnin")) o.burnin = parse_integer(*v, "burnin");
  if (auto v = s->get("thin")) o.thin = parse_integer(*v, "thin");
  if (auto v = s->get("chains")) {
    const long long c = parse_integer(*v, "chains");
    if (c < 1) fail(ErrorKind::Config, "chains must be at least 1");
    o.chains = static_cast<std::size_t>(c);
  }
  if (auto v = s->get("seed")) o.seed = static_cast<std::uint64_t>(parse_integer(*v, "seed"));
  if (auto v = s->get("adapt_window")) o.adapt_window = parse_integer(*v, "adapt_window");
  if (auto v = s->get("dense_threshold")) o.dense_threshold = parse_integer(*v, "dense_threshold");
  if (auto v = s->get("target_acceptance")) o.target_acceptance = parse_double(*v, "target_acceptance");
  if (auto v = s->get("solver")) {
    if (*v == "auto") o.solver = SolverKind::Auto;
    else if (*v == "dense") o.solver = SolverKind::Dense;
    else if (*v == "sparse") o.solver = SolverKind::Sparse;
    else fail(ErrorKind::Config, "unknown solver '" + *v + "' (auto, dense, sparse)");
  }
  return o;
}

DrawLayout DrawLayout::for_model(const ModelData& data) {
  DrawLayout l;
  l.gamma_begin = 0;
  l.gamma_count = data.fixed.cols();
  l.columns = data.fixed.labels;
  for (const auto& b : data.random.blocks) {
    l.g_begin.push_back(static_cast<Eigen::Index>(l.columns.size()));
    l.g_dim.push_back(b.slots);
    for (Eigen::Index i = 0; i < b.slots; ++i)
      for (Eigen::Index j = i; j < b.slots; ++j)
        l.columns.push_back("G:" + b.name + ":" + b.slot_labels[static_cast<std::size_t>(i)] + "x" +
                            b.slot_labels[static_cast<std::size_t>(j)]);
  }
  l.r_begin = static_cast<Eigen::Index>(l.columns.size());
  l.r_dim = static_cast<Eigen::Index>(data.n_responses());
  const auto& names = data.spec.responses;
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i; j < names.size(); ++j) l.columns.push_back("R:" + names[i] + "x" + names[j]);
  l.deviance_col = static_cast<Eigen::Index>(l.columns.size());
  l.columns.push_back("deviance");
  return l;
}

namespace {

void pack_upper(const Eigen::MatrixXd& m, Eigen::VectorXd& row, Eigen::Index begin) {
  Eigen::Index k = begin;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i; j < m.cols(); ++j) row(k++) = m(i, j);
}

Eigen::MatrixXd unpack_upper(const Eigen::VectorXd& row, Eigen::Index begin, Eigen::Index d) {
  Eigen::MatrixXd m(d, d);
  Eigen::Index k = begin;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) m(i, j) = m(j, i) = row(k++);
  return m;
}

}  // namespace

Eigen::VectorXd DrawLayout::pack(const Eigen::VectorXd& gamma, const std::vector<Eigen::MatrixXd>& g,
                                 const Eigen::MatrixXd& r, double deviance) const {
  Eigen::VectorXd row(size());
  row.segment(gamma_begin, gamma_count) = gamma;
  for (std::size_t b = 0; b < g.size(); ++b) pack_upper(g[b], row, g_begin[b]);
  pack_upper(r, row, r_begin);
  row(deviance_col) = deviance;
  return row;
}

Eigen::MatrixXd DrawLayout::g_block(const Eigen::VectorXd& row, std::size_t block) const {
  return unpack_upper(row, g_begin[block], g_dim[block]);
}

Eigen::MatrixXd DrawLayout::r_block(const Eigen::VectorXd& row) const { return unpack_upper(row, r_begin, r_dim); }

std::vector<double> ChainOutput::deviance(const DrawLayout& layout) const {
  std::vector<double> d(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index i = 0; i < draws.rows(); ++i) d[static_cast<std::size_t>(i)] = draws(i, layout.deviance_col);
  return d;
}

std::vector<double> FitResult::pooled(Eigen::Index column) const {
  std::vector<double> out;
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i) out.push_back(c.draws(i, column));
  return out;
}

std::size_t FitResult::total_draws() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += static_cast<std::size_t>(c.draws.rows());
  return n;
}

namespace {

// Zeroes the entries of a parametric matrix that the block's shape holds at 0.
Eigen::MatrixXd apply_shape(const RandomBlockSpec& block, std::size_t n_responses, const Eigen::MatrixXd& m) {
  const Eigen::Index d = m.rows();
  if (block.shape == ParametricShape::Scalar) return m.diagonal().mean() * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  for (const auto& subset : block.partition(n_responses))
    for (int i : subset)
      for (int j : subset) out(i, j) = m(i, j);
  return out;
}

bool is_poisson(const ModelData& data) { return data.spec.family.family == Family::PoissonLog; }

Eigen::VectorXd location_mean(const ModelData& data, const Eigen::VectorXd& rho) {
  const Eigen::Index q = data.fixed.cols();
  Eigen::VectorXd mean = data.fixed.X * rho.head(q);
  if (data.random.cols() > 0) mean += data.random.W * rho.tail(data.random.cols());
  return mean;
}

Eigen::MatrixXd floored_inverse(const std::string& name, const Eigen::MatrixXd& p) {
  KroneckerBlock b{name, ParametricShape::Unstructured, p, 1};
  return b.parametric_inverse();
}

}  // namespace

ChainState initial_state(const ModelData& data) {
  ChainState s;
  const std::size_t P = data.n_responses();
  s.gamma = Eigen::Map<const Eigen::VectorXd>(data.fixed.prior_mean.data(),
                                              static_cast<Eigen::Index>(data.fixed.prior_mean.size()));
  s.eps = Eigen::VectorXd::Zero(data.random.cols());
  for (const auto& b : data.spec.random) s.g.push_back(apply_shape(b, P, b.prior.limit));
  s.r = apply_shape(data.spec.residual, P, data.spec.residual.prior.limit);
  if (is_poisson(data))
    s.eta = (data.y.array() + 0.5).log().matrix();
  else
    s.eta = data.y;
  s.mh_step = s.r.diagonal().cwiseSqrt();
  return s;
}

struct LocationSampler::SparseFactor {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
  bool analyzed = false;
};

LocationSampler::LocationSampler(const ModelData& data, const McmcOptions& options) : data_(data) {
  q_ = data.fixed.cols();
  const Eigen::Index m = data.random.cols();
  dim_ = q_ + m;
  const Eigen::Index n = static_cast<Eigen::Index>(data.stacked.size());
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (SparseRowMatrix::InnerIterator it(data.fixed.X, r); it; ++it) t.emplace_back(r, it.col(), it.value());
    for (SparseRowMatrix::InnerIterator it(data.random.W, r); it; ++it) t.emplace_back(r, q_ + it.col(), it.value());
  }
  m_.resize(n, dim_);
  m_.setFromTriplets(t.begin(), t.end());
  mt_ = m_.transpose();
  prior_mean_ = Eigen::VectorXd::Zero(dim_);
  prior_sd_ = Eigen::VectorXd::Zero(q_);
  for (Eigen::Index k = 0; k < q_; ++k) {
    prior_mean_(k) = data.fixed.prior_mean[static_cast<std::size_t>(k)];
    prior_sd_(k) = std::sqrt(data.fixed.prior_variance[static_cast<std::size_t>(k)]);
  }
  switch (options.solver) {
    case SolverKind::Dense: dense_ = true; break;
    case SolverKind::Sparse: dense_ = false; break;
    case SolverKind::Auto: dense_ = dim_ < options.dense_threshold; break;
  }
  sparse_ = std::make_unique<SparseFactor>();

  // R^{-1} pattern: one full P x P block per subject.
  const Eigen::Index P = static_cast<Eigen::Index>(data.n_responses());
  std::vector<Eigen::Triplet<double>> rt;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.n_subjects()); ++i)
    for (Eigen::Index a = 0; a < P; ++a)
      for (Eigen::Index b = 0; b < P; ++b) rt.emplace_back(i * P + a, i * P + b, 1.0);
  r_inv_.resize(n, n);
  r_inv_.setFromTriplets(rt.begin(), rt.end());
}

LocationSampler::~LocationSampler() = default;

void LocationSampler::factor(const std::vector<Eigen::MatrixXd>& g, const Eigen::MatrixXd& r) {
  const Eigen::MatrixXd rinv = floored_inverse("residual", r);
  const Eigen::Index P = rinv.rows();
  for (Eigen::Index col = 0; col < r_inv_.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(r_inv_, col); it; ++it)
      it.valueRef() = rinv(it.row() % P, col % P);

  std::vector<KroneckerBlock> blocks;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& lay = data_.random.blocks[k];
    blocks.push_back({lay.name, data_.spec.random[k].shape, g[k], lay.groups});
  }
  const CovarianceAssembly assembly{std::move(blocks)};
  const Eigen::SparseMatrix<double> ginv = assembly.inverse_sparse();

  std::vector<Eigen::Triplet<double>> pt;
  for (Eigen::Index k = 0; k < q_; ++k) pt.emplace_back(k, k, 1.0 / (prior_sd_(k) * prior_sd_(k)));
  for (Eigen::Index col = 0; col < ginv.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(ginv, col); it; ++it)
      pt.emplace_back(q_ + it.row(), q_ + it.col(), it.value());
  Eigen::SparseMatrix<double> prior(dim_, dim_);
  prior.setFromTriplets(pt.begin(), pt.end());

  a_ = Eigen::SparseMatrix<double>(mt_ * r_inv_ * m_) + prior;
  if (dense_) {
    dense_a_ = Eigen::MatrixXd(a_);
    dense_llt_.compute(dense_a_);
    if (dense_llt_.info() != Eigen::Success) report_failure();
  } else {
    if (!sparse_->analyzed) {
      sparse_->llt.analyzePattern(a_);
      sparse_->analyzed = true;
    }
    sparse_->llt.factorize(a_);
    if (sparse_->llt.info() != Eigen::Success) report_failure();
  }
}

void LocationSampler::report_failure() {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a_);
  std::ostringstream msg;
  msg << "Cholesky factorization of the location system failed";
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd d = ldlt.vectorD();
    Eigen::Index k = 0;
    d.minCoeff(&k);
    const auto& perm = ldlt.permutationP().indices();
    Eigen::Index original = k;
    for (Eigen::Index i = 0; i < perm.size(); ++i)
      if (perm(i) == k) original = i;
    msg << "; smallest pivot " << d(k) << " at ";
    if (original < q_) {
      msg << "fixed effect '" << data_.fixed.labels[static_cast<std::size_t>(original)] << "'";
    } else {
      const Eigen::Index col = original - q_;
      for (const auto& b : data_.random.blocks)
        if (col >= b.offset && col < b.offset + b.width())
          msg << "random block '" << b.name << "' column '" << data_.random.column_labels[static_cast<std::size_t>(col)]
              << "'";
    }
  }
  fail(ErrorKind::Numeric, msg.str());
}

Eigen::VectorXd LocationSampler::solve(const Eigen::VectorXd& b) const {
  return dense_ ? Eigen::VectorXd(dense_llt_.solve(b)) : Eigen::VectorXd(sparse_->llt.solve(b));
}

Eigen::VectorXd LocationSampler::draw(const Eigen::VectorXd& t, const std::vector<Eigen::MatrixXd>& g,
                                      const Eigen::MatrixXd& r, Rng& rng) {
  factor(g, r);
  Eigen::VectorXd rho_star(dim_);
  for (Eigen::Index k = 0; k < q_; ++k) rho_star(k) = prior_mean_(k) + prior_sd_(k) * standard_normal(rng);
  Eigen::Index off = q_;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& lay = data_.random.blocks[k];
    const KroneckerBlock block{lay.name, data_.spec.random[k].shape, g[k], lay.groups};
    rho_star.segment(off, block.dimension()) = block.sample(rng);
    off += block.dimension();
  }
  const KroneckerBlock residual{"residual", data_.spec.residual.shape, r,
                                static_cast<Eigen::Index>(data_.n_subjects())};
  const Eigen::VectorXd e_star = residual.sample(rng);
  const Eigen::VectorXd resid = t - m_ * rho_star - e_star;
  const Eigen::VectorXd rhs = mt_ * (r_inv_ * resid);
  return rho_star + solve(rhs);
}

Eigen::VectorXd LocationSampler::conditional_mean(const Eigen::VectorXd& t, const std::vector<Eigen::MatrixXd>& g,
                                                  const Eigen::MatrixXd& r) {
  factor(g, r);
  Eigen::VectorXd rhs = mt_ * (r_inv_ * t);
  for (Eigen::Index k = 0; k < q_; ++k) rhs(k) += prior_mean_(k) / (prior_sd_(k) * prior_sd_(k));
  return solve(rhs);
}

namespace {

double latent_log_target(const ModelData& data, std::size_t subject, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& rinv, const Eigen::VectorXd& block) {
  const Eigen::Index P = rinv.rows();
  const Eigen::Index base = static_cast<Eigen::Index>(subject) * P;
  double lp = 0.0;
  Eigen::VectorXd e(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const double y = data.y(base + p);
    lp += y * block(p) - std::exp(block(p));
    e(p) = block(p) - mean(base + p);
  }
  return lp - 0.5 * e.dot(rinv * e);
}

}  // namespace

double latent_acceptance_probability(const ModelData& data, std::size_t subject, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& r, const Eigen::VectorXd& current,
                                     const Eigen::VectorXd& proposal) {
  const Eigen::MatrixXd rinv = floored_inverse("residual", r);
  const double lc = latent_log_target(data, subject, mean, rinv, current);
  if (!std::isfinite(lc))
    fail(ErrorKind::StateCorruption, "non-finite likelihood at the current latent state of subject " +
                                         std::to_string(subject));
  const double lp = latent_log_target(data, subject, mean, rinv, proposal);
  if (!std::isfinite(lp)) return 0.0;
  return std::min(1.0, std::exp(lp - lc));
}

long update_latent(const ModelData& data, const Eigen::VectorXd& mean, ChainState& state, Rng& rng) {
  if (!is_poisson(data)) return 0;
  const Eigen::Index P = static_cast<Eigen::Index>(data.n_responses());
  const Eigen::MatrixXd rinv = floored_inverse("residual", state.r);
  long accepted = 0;
  Eigen::VectorXd cur(P);
  Eigen::VectorXd prop(P);
  for (std::size_t i = 0; i < data.n_subjects(); ++i) {
    const Eigen::Index base = static_cast<Eigen::Index>(i) * P;
    cur = state.eta.segment(base, P);
    for (Eigen::Index p = 0; p < P; ++p) prop(p) = cur(p) + state.mh_step(p) * standard_normal(rng);
    const double lc = latent_log_target(data, i, mean, rinv, cur);
    if (!std::isfinite(lc))
      fail(ErrorKind::StateCorruption, "non-finite likelihood at the current latent state of subject '" +
                                           data.subject_labels[i] + "'");
    const double lp = latent_log_target(data, i, mean, rinv, prop);
    if (std::isfinite(lp) && std::log(uniform01(rng)) < lp - lc) {
      state.eta.segment(base, P) = prop;
      ++accepted;
    }
  }
  return accepted;
}

double state_deviance(const ModelData& data, const Eigen::VectorXd& rho, const Eigen::MatrixXd& r,
                      const Eigen::VectorXd& eta) {
  if (is_poisson(data)) return poisson_deviance(data.y, eta);
  return gaussian_deviance(data.y, location_mean(data, rho), r);
}

namespace {

void write_snapshot(const std::string& path, const DrawLayout& layout, const Eigen::VectorXd& row) {
  std::string out;
  for (std::size_t c = 0; c < layout.columns.size(); ++c) out += (c ? "," : "") + csv_escape(layout.columns[c]);
  out += '\n';
  for (Eigen::Index c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row(c));
  out += '\n';
  write_file_atomic(path, out);
}

}  // namespace

ChainOutput run_chain(const ModelData& data, const McmcOptions& options, std::size_t chain) {
  options.validate();
  const DrawLayout layout = DrawLayout::for_model(data);
  ChainOutput out;
  out.chain = chain;
  out.seed = chain_seed(options.seed, chain);
  Rng rng(out.seed);

  ChainState state = initial_state(data);
  LocationSampler sampler(data, options);
  const std::size_t P = data.n_responses();
  const Eigen::Index q = data.fixed.cols();
  const Eigen::Index m = data.random.cols();
  const bool latent = is_poisson(data);
  const double target = options.target_acceptance > 0.0 ? options.target_acceptance : (P == 1 ? 0.44 : 0.23);

  const std::size_t stored = options.stored_draws();
  out.draws.resize(static_cast<Eigen::Index>(stored), layout.size());
  if (options.store_effects) out.effects.resize(static_cast<Eigen::Index>(stored), m);
  out.sum_rho = Eigen::VectorXd::Zero(q + m);
  out.sum_r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  out.sum_eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.stacked.size()));

  Eigen::VectorXd rho(q + m);
  rho << state.gamma, state.eps;
  Eigen::VectorXd mean = location_mean(data, rho);
  long window_accepted = 0;
  long window_proposed = 0;
  long post_accepted = 0;
  long post_proposed = 0;
  double dev = 0.0;
  Eigen::Index next = 0;

  for (long t = 1; t <= options.iterations; ++t) {
    state.iteration = t;
    try {
      if (latent) {
        const long acc = update_latent(data, mean, state, rng);
        const long prop = static_cast<long>(data.n_subjects());
        if (t <= options.burnin) {
          window_accepted += acc;
          window_proposed += prop;
          if (t % options.adapt_window == 0) {
            const double rate = static_cast<double>(window_accepted) / static_cast<double>(window_proposed);
            state.mh_step *= std::exp(2.0 * (rate - target));
            window_accepted = window_proposed = 0;
          }
        } else {
          post_accepted += acc;
          post_proposed += prop;
        }
      }
      const Eigen::VectorXd& work = latent ? state.eta : data.y;
      rho = sampler.draw(work, state.g, state.r, rng);
      state.gamma = rho.head(q);
      state.eps = rho.tail(m);

      for (std::size_t k = 0; k < data.random.blocks.size(); ++k) {
        const auto& lay = data.random.blocks[k];
        const Eigen::MatrixXd phi =
            Eigen::Map<const Eigen::MatrixXd>(state.eps.data() + lay.offset, lay.slots, lay.groups).transpose();
        state.g[k] = update_parametric_block(data.spec.random[k], P, phi, rng);
        if (!is_spd(state.g[k]))
          fail(ErrorKind::Numeric, "update of block '" + lay.name + "' produced a non-SPD matrix");
      }

      mean = location_mean(data, rho);
      const Eigen::VectorXd resid = work - mean;
      const Eigen::MatrixXd phi_r =
          Eigen::Map<const Eigen::MatrixXd>(resid.data(), static_cast<Eigen::Index>(P),
                                            static_cast<Eigen::Index>(data.n_subjects()))
              .transpose();
      state.r = update_parametric_block(data.spec.residual, P, phi_r, rng);
      if (!is_spd(state.r)) fail(ErrorKind::Numeric, "residual update produced a non-SPD matrix");

      dev = state_deviance(data, rho, state.r, state.eta);
    } catch (const Error& e) {
      std::string where = "chain " + std::to_string(chain) + " iteration " + std::to_string(t) + ": " + e.what();
      if (!options.snapshot_path.empty()) {
        const std::string path = options.snapshot_path + ".chain" + std::to_string(chain) + ".csv";
        try {
          write_snapshot(path, layout, layout.pack(state.gamma, state.g, state.r, dev));
          where += " (state snapshot: " + path + ")";
        } catch (const Error&) {
        }
      }
      throw Error(e.kind(), where);
    }

    if (options.stores(t)) {
      out.draws.row(next) = layout.pack(state.gamma, state.g, state.r, dev).transpose();
      if (options.store_effects) out.effects.row(next) = state.eps.transpose();
      out.iterations.push_back(t);
      out.sum_rho += rho;
      out.sum_r += state.r;
      out.sum_eta += state.eta;
      ++next;
    }
  }
  out.acceptance_rate = post_proposed > 0 ? static_cast<double>(post_accepted) / static_cast<double>(post_proposed) : 0.0;
  out.final_mh_step = state.mh_step;
  if (latent)
    spdlog::debug("chain {}: post-burn-in latent acceptance {:.3f}", chain, out.acceptance_rate);
  return out;
}

FitResult run_chains(const ModelData& data, const McmcOptions& options) {
  options.validate();
  FitResult fit;
  fit.layout = DrawLayout::for_model(data);
  fit.options = options;
  fit.chains.resize(options.chains);
  if (options.parallel && options.chains > 1) {
    std::vector<std::exception_ptr> errors(options.chains);
    std::vector<std::thread> workers;
    for (std::size_t c = 0; c < options.chains; ++c)
      workers.emplace_back([&, c] {
        try {
          fit.chains[c] = run_chain(data, options, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t c = 0; c < options.chains; ++c) fit.chains[c] = run_chain(data, options, c);
  }

  std::vector<double> deviances = fit.pooled(fit.layout.deviance_col);
  const double n = static_cast<double>(deviances.size());
  Eigen::VectorXd rho_bar = Eigen::VectorXd::Zero(fit.chains.front().sum_rho.size());
  Eigen::MatrixXd r_bar = Eigen::MatrixXd::Zero(fit.chains.front().sum_r.rows(), fit.chains.front().sum_r.cols());
  Eigen::VectorXd eta_bar = Eigen::VectorXd::Zero(fit.chains.front().sum_eta.size());
  for (const auto& c : fit.chains) {
    rho_bar += c.sum_rho;
    r_bar += c.sum_r;
    eta_bar += c.sum_eta;
  }
  rho_bar /= n;
  r_bar /= n;
  eta_bar /= n;
  fit.dic = dic_summary(deviances, state_deviance(data, rho_bar, r_bar, eta_bar));
  return fit;
}

}  // namespace mmglmm
