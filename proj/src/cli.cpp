#include "mmglmm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mmglmm/diagnostics.hpp"
#include "mmglmm/error.hpp"
#include "mmglmm/inference.hpp"
#include "mmglmm/io.hpp"
#include "mmglmm/pipeline.hpp"
#include "mmglmm/simulate.hpp"

namespace mmglmm {

namespace {

using nlohmann::json;

struct CommonFlags {
  std::string out;
  bool verbose = false;
  bool quiet = false;
};

struct FitFlags {
  std::string config;
  std::string data;
  std::optional<long> iterations;
  std::optional<long> burnin;
  std::optional<long> thin;
  std::optional<std::size_t> chains;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string dump_design;
  std::string label;
  bool serial = false;
};

struct ScoreFlags {
  std::string fit;
  std::string config;
  std::string data;
  std::string new_data;
  double level = 0.95;
  bool no_random = false;
  std::uint64_t seed = 1;
  std::string grouping = "facility";
};

struct DiagnoseFlags {
  std::string fit;
  double prob = 0.95;
  std::string qq_family;
  std::string config;
  std::string data;
  std::size_t n_boot = 200;
  std::size_t bins = 20;
};

std::string resolve_out(const std::string& out) {
  if (!out.empty()) return out;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "mmglmm-out";
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) fail(ErrorKind::Usage, flag + " is required");
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, flag + " path '" + path + "' does not exist");
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : ""; }

// ---- simulate -------------------------------------------------------------

int cmd_simulate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_flag) {
  require_file(config, "--config");
  TruthRecord truth = TruthRecord::from_json(read_file(config));
  if (seed) truth.seed = *seed;
  const SimulatedData sim = generate_dataset(truth);
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);
  write_file_atomic(out + "/data.csv", sim.csv);
  write_file_atomic(out + "/truth.json", truth.to_json());

  std::string eff = "block,group,slot,value\n";
  for (const auto& b : truth.random) {
    const Eigen::MatrixXd& u = sim.effects.at(b.name);
    const auto& labels = b.level == BlockLevel::Facility ? sim.hierarchy.facilities : sim.hierarchy.teams;
    std::vector<std::string> slots;
    for (const auto& t : b.terms)
      for (const auto& r : truth.responses) slots.push_back(TermExpr::parse(t).label() + "." + r);
    for (Eigen::Index g = 0; g < u.rows(); ++g)
      for (Eigen::Index s = 0; s < u.cols(); ++s)
        eff += b.name + "," + labels[static_cast<std::size_t>(g)] + "," + slots[static_cast<std::size_t>(s)] + "," +
               format_double(u(g, s)) + "\n";
  }
  write_file_atomic(out + "/effects.csv", eff);

  const auto& pat = sim.table.column("patient").labels;
  const auto& team = sim.table.column("team").labels;
  const auto& fac = sim.table.column("facility").labels;
  std::string means = "patient,team,facility,response,eta,mean,residual\n";
  for (Eigen::Index i = 0; i < sim.eta.rows(); ++i)
    for (Eigen::Index p = 0; p < sim.eta.cols(); ++p) {
      const auto k = static_cast<std::size_t>(i);
      means += pat[k] + "," + team[k] + "," + fac[k] + "," + truth.responses[static_cast<std::size_t>(p)] + "," +
               format_double(sim.eta(i, p)) + "," +
               format_double(true_mean_outcome(truth.family, sim.eta(i, p), truth.residual(p, p))) + "," +
               format_double(sim.residuals(i, p)) + "\n";
    }
  write_file_atomic(out + "/means.csv", means);
  std::cout << "simulated " << sim.table.n_rows << " patients in " << sim.hierarchy.n_teams() << " teams and "
            << sim.hierarchy.n_facilities() << " facilities -> " << out << "\n";
  return 0;
}

// ---- fit ------------------------------------------------------------------

int cmd_fit(const FitFlags& f, const std::string& out_flag) {
  require_file(f.config, "--config");
  require_file(f.data, "--data");
  const PreparedModel model = prepare_model(read_file(f.config), read_file(f.data));
  McmcOptions defaults;
  McmcOptions options = mcmc_options_from_config(model.doc, defaults);
  if (f.profile == "paper") {
    options.iterations = 50000;
    options.burnin = 10000;
    options.thin = 25;
  } else if (!f.profile.empty()) {
    fail(ErrorKind::Usage, "unknown profile '" + f.profile + "' (paper)");
  }
  if (f.iterations) options.iterations = *f.iterations;
  if (f.burnin) options.burnin = *f.burnin;
  if (f.thin) options.thin = *f.thin;
  if (f.chains) options.chains = *f.chains;
  if (f.seed) options.seed = *f.seed;
  options.parallel = !f.serial;
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);
  options.snapshot_path = out + "/snapshot";
  options.validate();

  if (!f.dump_design.empty()) {
    ensure_directory(f.dump_design);
    dump_design(model.data, f.dump_design);
  }
  spdlog::info("fitting {} subjects x {} responses: {} fixed, {} random columns; {} chain(s) of {} iterations",
               model.data.n_subjects(), model.data.n_responses(), model.data.fixed.cols(), model.data.random.cols(),
               options.chains, options.iterations);
  const FitResult fit = run_chains(model.data, options);
  write_fit(out, fit, model, f.label.empty() ? std::filesystem::path(f.config).stem().string() : f.label);
  std::cout << "stored " << fit.total_draws() << " draws; DIC " << format_double(fit.dic.dic) << " (mean deviance "
            << format_double(fit.dic.mean_deviance) << ", pD " << format_double(fit.dic.effective_parameters)
            << ") -> " << out << "\n";
  return 0;
}

// ---- diagnose -------------------------------------------------------------

int cmd_diagnose(const DiagnoseFlags& f, const std::string& out_flag) {
  if (f.fit.empty()) fail(ErrorKind::Usage, "--fit is required");
  const StoredFit fit = read_fit(f.fit, false);
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);

  std::string summary = "parameter,mean,sd,hpd_lower,hpd_upper,marker,ratio_mean,ratio_lower,ratio_upper,rhat,ess\n";
  std::string density = "parameter,bin_lower,bin_upper,count\n";
  for (std::size_t c = 0; c < fit.columns.size(); ++c) {
    const auto chains = fit.by_chain(c);
    std::vector<double> all;
    for (const auto& ch : chains) all.insert(all.end(), ch.begin(), ch.end());
    if (all.size() < 2) fail(ErrorKind::UndefinedStatistic, "fewer than 2 stored draws");
    const PosteriorSummary s = summarize_draws(fit.columns[c], all, f.prob);
    std::string ratio = ",,";
    if (fit.columns[c].starts_with("gamma:")) {
      std::vector<double> e = all;
      for (double& x : e) x = std::exp(x);
      const PosteriorSummary r = summarize_draws(fit.columns[c], e, f.prob, 1.0);
      ratio = fmt(r.mean) + "," + fmt(r.lower) + "," + fmt(r.upper);
    }
    std::string rhat;
    std::string ess;
    try {
      if (chains.size() >= 2) rhat = fmt(gelman_rubin(chains));
    } catch (const Error&) {
    }
    try {
      double total = 0.0;
      for (const auto& ch : chains) total += effective_sample_size(ch);
      ess = fmt(total);
    } catch (const Error&) {
    }
    summary += csv_escape(s.label) + "," + fmt(s.mean) + "," + fmt(s.sd) + "," + fmt(s.lower) + "," + fmt(s.upper) +
               "," + csv_escape(s.marker) + "," + ratio + "," + rhat + "," + ess + "\n";

    const auto [lo_it, hi_it] = std::minmax_element(all.begin(), all.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double width = hi > lo ? (hi - lo) / static_cast<double>(f.bins) : 1.0;
    std::vector<std::size_t> counts(f.bins, 0);
    for (double x : all) {
      auto b = static_cast<std::size_t>((x - lo) / width);
      counts[std::min(b, f.bins - 1)]++;
    }
    for (std::size_t b = 0; b < f.bins; ++b)
      density += csv_escape(fit.columns[c]) + "," + fmt(lo + width * static_cast<double>(b)) + "," +
                 fmt(lo + width * static_cast<double>(b + 1)) + "," + std::to_string(counts[b]) + "\n";
  }
  write_file_atomic(out + "/summary.csv", summary);
  write_file_atomic(out + "/density.csv", density);
  write_file_atomic(out + "/dic.csv", "dic,mean_deviance,deviance_at_mean,effective_parameters\n" + fmt(fit.dic) + "," +
                                          fmt(fit.mean_deviance) + "," + fmt(fit.deviance_at_mean) + "," +
                                          fmt(fit.mean_deviance - fit.deviance_at_mean) + "\n");

  // ICC needs an intercept variance at the team and the facility level.
  const json meta = json::parse(fit.metadata);
  std::string icc_csv = "response,level,mean,sd,hpd_lower,hpd_upper\n";
  bool any_icc = false;
  for (const auto& resp : meta.at("responses")) {
    const std::string r = resp.get<std::string>();
    std::optional<std::string> team_col;
    std::optional<std::string> fac_col;
    for (const auto& b : meta.at("blocks")) {
      const std::string col = "G:" + b.at("name").get<std::string>() + ":intercept." + r + "xintercept." + r;
      if (b.at("level") == "team" && !team_col) team_col = col;
      if (b.at("level") == "facility" && !fac_col) fac_col = col;
    }
    auto column = [&](const std::string& name) -> std::optional<std::vector<double>> {
      const auto it = std::find(fit.columns.begin(), fit.columns.end(), name);
      if (it == fit.columns.end()) return std::nullopt;
      std::vector<double> v;
      const auto c = static_cast<Eigen::Index>(it - fit.columns.begin());
      for (Eigen::Index i = 0; i < fit.draws.rows(); ++i) v.push_back(fit.draws(i, c));
      return v;
    };
    if (!team_col || !fac_col) continue;
    const auto pv = column("R:" + r + "x" + r);
    const auto tv = column(*team_col);
    const auto fv = column(*fac_col);
    if (!pv || !tv || !fv) continue;
    for (const auto& s : icc(*pv, *tv, *fv, f.prob)) {
      icc_csv += r + "," + s.label + "," + fmt(s.mean) + "," + fmt(s.sd) + "," + fmt(s.lower) + "," + fmt(s.upper) + "\n";
      any_icc = true;
    }
  }
  if (any_icc) write_file_atomic(out + "/icc.csv", icc_csv);

  if (!f.qq_family.empty()) {
    require_file(f.config, "--config");
    require_file(f.data, "--data");
    const QqFamily family = parse_qq_family(f.qq_family);
    const PreparedModel model = prepare_model(read_file(f.config), read_file(f.data));
    for (const auto& r : model.data.spec.responses) {
      const Column& col = model.table.column(r);
      const QqTable qq = qq_quantiles(col.numbers, family, f.n_boot);
      std::string text = "theoretical,sample,envelope_lower,envelope_upper\n";
      for (const auto& p : qq.points)
        text += fmt(p.theoretical) + "," + fmt(p.sample) + "," + fmt(p.lower) + "," + fmt(p.upper) + "\n";
      write_file_atomic(out + "/qq_" + r + ".csv", text);
      std::cout << "QQ " << r << " vs " << to_string(family) << ": " << fmt(100.0 * qq.fraction_inside())
                << "% of points inside the envelope\n";
    }
  }
  std::cout << "DIC " << fmt(fit.dic) << "; summaries for " << fit.columns.size() << " columns -> " << out << "\n";
  return 0;
}

// ---- predict / indices ----------------------------------------------------

struct ScoringContext {
  PreparedModel model;
  PosteriorDraws post;
  ObservationTable table;
};

ScoringContext load_scoring(const ScoreFlags& f) {
  if (f.fit.empty()) fail(ErrorKind::Usage, "--fit is required");
  require_file(f.config, "--config");
  require_file(f.data, "--data");
  if (!f.new_data.empty()) require_file(f.new_data, "--new");
  ScoringContext ctx;
  ctx.model = prepare_model(read_file(f.config), read_file(f.data));
  const StoredFit fit = read_fit(f.fit, true);
  if (fit.data_hash != ctx.model.data_hash)
    fail(ErrorKind::Comparison, "fit in '" + f.fit + "' was made on different data (hash " + fit.data_hash + ")");
  ctx.post = posterior_from_stored(fit, ctx.model.data);
  ctx.table = f.new_data.empty() ? ctx.model.table : prepare_scoring_table(ctx.model, read_file(f.new_data));
  return ctx;
}

std::string prediction_csv(const PredictionTable& t) {
  std::string out = "patient,team,facility,response,point,lower,upper,median,include_random\n";
  for (const auto& r : t.rows)
    out += csv_escape(r.subject) + "," + csv_escape(r.team) + "," + csv_escape(r.facility) + "," +
           t.responses[r.response] + "," + fmt(r.point) + "," + fmt(r.lower) + "," + fmt(r.upper) + "," +
           fmt(r.median) + "," + (t.include_random ? "1" : "0") + "\n";
  return out;
}

int cmd_predict(const ScoreFlags& f, const std::string& out_flag) {
  const ScoringContext ctx = load_scoring(f);
  const PredictionTable t = predict_portfolio(ctx.model.data, ctx.post, ctx.table, !f.no_random, f.level, f.seed);
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);
  write_file_atomic(out + "/predictions.csv", prediction_csv(t));
  std::cout << "predicted " << t.n_subjects() << " subjects x " << t.responses.size() << " responses -> " << out << "\n";
  return 0;
}

int cmd_indices(const ScoreFlags& f, const std::string& out_flag) {
  const Grouping grouping = parse_grouping(f.grouping);
  const ScoringContext ctx = load_scoring(f);
  const PredictionTable with = predict_portfolio(ctx.model.data, ctx.post, ctx.table, true, f.level, f.seed);
  const PredictionTable without = predict_portfolio(ctx.model.data, ctx.post, ctx.table, false, f.level, f.seed);
  const IndexReport report = index_report(with, without, grouping);
  std::string text = "group,response,subjects,nis,rsur\n";
  for (const auto& r : report.rows)
    text += csv_escape(r.group) + "," + r.response + "," + std::to_string(r.subjects) + "," + fmt(r.nis) + "," +
            fmt(r.rsur) + "\n";
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);
  write_file_atomic(out + "/indices.csv", text);
  std::cout << "indices for " << report.rows.size() << " group x response rows -> " << out << "\n";
  return 0;
}

// ---- compare --------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& fits, std::vector<std::string> labels, const std::string& profile,
                const std::string& out_flag) {
  if (fits.size() < 2) fail(ErrorKind::Usage, "--fits needs at least 2 fit directories");
  if (!labels.empty() && labels.size() != fits.size())
    fail(ErrorKind::Usage, "--labels must give one label per fit");
  if (!profile.empty() && profile != "paper") fail(ErrorKind::Usage, "unknown profile '" + profile + "' (paper)");
  std::vector<LadderInput> inputs;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const StoredFit s = read_fit(fits[k], false);
    std::string label = labels.empty() ? s.label : labels[k];
    if (labels.empty() && profile == "paper") label = "Model " + std::to_string(k + 1);
    inputs.push_back({label, s.dic, s.data_hash});
  }
  const ModelLadder ladder = compare_models(inputs);
  std::string text = "label,dic,delta_dic,preferred\n";
  for (const auto& e : ladder.entries) {
    text += csv_escape(e.label) + "," + fmt(e.dic) + "," + (e.delta ? fmt(*e.delta) : "") + "," +
            (e.preferred ? "1" : "0") + "\n";
    std::cout << e.label << "  DIC " << fmt(e.dic);
    if (e.delta) std::cout << "  dDIC " << fmt(*e.delta) << (e.preferred ? "  preferred" : "");
    std::cout << "\n";
  }
  const std::string out = resolve_out(out_flag);
  ensure_directory(out);
  write_file_atomic(out + "/ladder.csv", text);
  return 0;
}

void configure_logging(const CommonFlags& c) {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("mmglmm");
    l->set_pattern("%l: %v");
    return l;
  }();
  spdlog::set_default_logger(logger);
  spdlog::set_level(c.quiet ? spdlog::level::warn : c.verbose ? spdlog::level::debug : spdlog::level::info);
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Bayesian multivariate multilevel GLMM fitting by MCMC", "mmglmm"};
  app.require_subcommand(1);
  CommonFlags common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output directory (default $MMGLMM_OUT_DIR or ./mmglmm-out)");
    sub->add_flag("-v,--verbose", common.verbose, "Debug logging");
    sub->add_flag("-q,--quiet", common.quiet, "Warnings only");
  };

  std::string sim_config;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset from a truth record");
  sim->add_option("--config", sim_config, "Truth record (JSON)")->required();
  sim->add_option("--seed", sim_seed, "Override the truth record's seed");
  add_common(sim);

  FitFlags ff;
  auto* fit = app.add_subcommand("fit", "Fit a model by MCMC");
  fit->add_option("--config", ff.config, "Model config")->required();
  fit->add_option("--data", ff.data, "Delimited data file")->required();
  fit->add_option("--iterations", ff.iterations);
  fit->add_option("--burnin", ff.burnin);
  fit->add_option("--thin", ff.thin);
  fit->add_option("--chains", ff.chains);
  fit->add_option("--seed", ff.seed);
  fit->add_option("--profile", ff.profile, "Preset: paper (50000/10000/25)");
  fit->add_option("--dump-design", ff.dump_design, "Write X and W to this directory");
  fit->add_option("--label", ff.label, "Model label recorded in fit.json");
  fit->add_flag("--serial", ff.serial, "Run chains one after another");
  add_common(fit);

  DiagnoseFlags df;
  auto* diag = app.add_subcommand("diagnose", "Posterior summaries, convergence and QQ data");
  diag->add_option("--fit", df.fit, "Fit directory")->required();
  diag->add_option("--prob", df.prob, "HPD probability");
  diag->add_option("--qq", df.qq_family, "QQ family for the responses: gaussian, lognormal, gamma");
  diag->add_option("--config", df.config, "Model config (for --qq)");
  diag->add_option("--data", df.data, "Data file (for --qq)");
  diag->add_option("--bootstrap", df.n_boot, "QQ bootstrap replicates");
  diag->add_option("--bins", df.bins, "Histogram bins")->check(CLI::PositiveNumber);
  add_common(diag);

  ScoreFlags pf;
  auto* pred = app.add_subcommand("predict", "Posterior predictions per subject");
  ScoreFlags xf;
  auto* idx = app.add_subcommand("indices", "NIS and RSUR per group");
  for (auto [sub, flags] : {std::pair{pred, &pf}, std::pair{idx, &xf}}) {
    sub->add_option("--fit", flags->fit, "Fit directory")->required();
    sub->add_option("--config", flags->config, "Model config used for the fit")->required();
    sub->add_option("--data", flags->data, "Training data used for the fit")->required();
    sub->add_option("--new", flags->new_data, "Rows to score (default: the training rows)");
    sub->add_option("--level", flags->level, "Interval level");
    sub->add_option("--seed", flags->seed, "Seed for effects of new groups");
    add_common(sub);
  }
  pred->add_flag("--no-random", pf.no_random, "Zero the random effects");
  idx->add_option("--grouping", xf.grouping, "team or facility");

  std::vector<std::string> cmp_fits;
  std::vector<std::string> cmp_labels;
  std::string cmp_profile;
  auto* cmp = app.add_subcommand("compare", "DIC model ladder");
  cmp->add_option("--fits", cmp_fits, "Fit directories in ladder order")->required();
  cmp->add_option("--labels", cmp_labels, "Labels in the same order");
  cmp->add_option("--profile", cmp_profile, "paper: label the ladder Model 1..6");
  add_common(cmp);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << " (run with --help)\n";
    return 1;
  }

  configure_logging(common);
  try {
    if (*sim) return cmd_simulate(sim_config, sim_seed, common.out);
    if (*fit) return cmd_fit(ff, common.out);
    if (*diag) return cmd_diagnose(df, common.out);
    if (*pred) return cmd_predict(pf, common.out);
    if (*idx) return cmd_indices(xf, common.out);
    if (*cmp) return cmd_compare(cmp_fits, cmp_labels, cmp_profile, common.out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args);
}

}  // namespace mmglmm
