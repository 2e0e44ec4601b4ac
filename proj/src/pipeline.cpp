#include "mmglmm/pipeline.hpp"

#include <charconv>
#include <filesystem>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"
#include "mmglmm/io.hpp"
#include "mmglmm/model_spec.hpp"

namespace mmglmm {

using nlohmann::json;

PreparedModel prepare_model(const std::string& config_text, const std::string& data_text) {
  PreparedModel m;
  m.doc = parse_config(config_text);
  const TableSchema schema = schema_from_config(m.doc);
  const PreprocessRules rules = preprocess_from_config(m.doc);
  ObservationTable raw = ingest_table(data_text, schema);
  if (raw.dropped_missing_id > 0)
    spdlog::info("dropped {} rows lacking a grouping identifier", raw.dropped_missing_id);
  m.table = preprocess(raw, rules);
  m.hierarchy = build_hierarchy(m.table, keys_from_config(m.doc));
  const ModelSpec spec = parse_model_config(m.doc, m.table);
  m.data = build_model_data(spec, m.table, m.hierarchy);
  m.data_hash = hex_hash(fnv1a_hash(data_text));
  return m;
}

ObservationTable prepare_scoring_table(const PreparedModel& model, const std::string& data_text) {
  TableSchema schema = schema_from_config(model.doc);
  schema.responses.clear();
  ObservationTable raw = ingest_table(data_text, schema);
  PreprocessRules rules = preprocess_from_config(model.doc);
  // Trimming is a property of the training sample; scoring keeps every row.
  rules.trim.clear();
  return preprocess(raw, rules);
}

namespace {

std::string join_header(const std::vector<std::string>& cols) {
  std::string out = "chain,iteration";
  for (const auto& c : cols) out += "," + csv_escape(c);
  return out + "\n";
}

std::string matrix_rows(const FitResult& fit, bool effects) {
  std::string out;
  for (const auto& c : fit.chains) {
    const Eigen::MatrixXd& m = effects ? c.effects : c.draws;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out += std::to_string(c.chain) + "," + std::to_string(c.iterations[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        out += ',';
        out += format_double(m(i, j));
      }
      out += '\n';
    }
  }
  return out;
}

double parse_cell(const std::string& s, const std::string& file) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::Schema, file + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::string draws_csv(const FitResult& fit) { return join_header(fit.layout.columns) + matrix_rows(fit, false); }

std::string effects_csv(const FitResult& fit, const ModelData& data) {
  return join_header(data.random.column_labels) + matrix_rows(fit, true);
}

std::string fit_metadata_json(const FitResult& fit, const PreparedModel& model, const std::string& label) {
  const ModelData& d = model.data;
  json j;
  j["label"] = label;
  j["data_hash"] = model.data_hash;
  j["family"] = std::string(to_string(d.spec.family.family));
  j["responses"] = d.spec.responses;
  j["response_scale"] = d.recipe.response_scale;
  j["options"] = {{"iterations", fit.options.iterations}, {"burnin", fit.options.burnin}, {"thin", fit.options.thin},
                  {"chains", fit.options.chains},         {"seed", fit.options.seed}};
  j["dic"] = {{"dic", fit.dic.dic},
              {"mean_deviance", fit.dic.mean_deviance},
              {"deviance_at_mean", fit.dic.deviance_at_mean},
              {"effective_parameters", fit.dic.effective_parameters}};
  j["subjects"] = d.n_subjects();
  j["fixed"] = d.fixed.labels;
  j["blocks"] = json::array();
  for (std::size_t k = 0; k < d.random.blocks.size(); ++k) {
    const auto& b = d.random.blocks[k];
    j["blocks"].push_back({{"name", b.name},
                           {"level", std::string(to_string(b.level))},
                           {"shape", std::string(to_string(d.spec.random[k].shape))},
                           {"groups", b.groups},
                           {"slots", b.slot_labels}});
  }
  j["chains"] = json::array();
  for (const auto& c : fit.chains)
    j["chains"].push_back({{"chain", c.chain}, {"seed", c.seed}, {"draws", c.draws.rows()},
                           {"latent_acceptance", c.acceptance_rate}});
  return j.dump(2) + "\n";
}

void write_fit(const std::string& directory, const FitResult& fit, const PreparedModel& model, const std::string& label) {
  ensure_directory(directory);
  write_file_atomic(directory + "/draws.csv", draws_csv(fit));
  if (fit.options.store_effects) write_file_atomic(directory + "/effects.csv", effects_csv(fit, model.data));
  write_file_atomic(directory + "/fit.json", fit_metadata_json(fit, model, label));
}

std::vector<std::vector<double>> StoredFit::by_chain(std::size_t column) const {
  std::vector<std::vector<double>> out(chains);
  for (Eigen::Index i = 0; i < draws.rows(); ++i)
    out[chain[static_cast<std::size_t>(i)]].push_back(draws(i, static_cast<Eigen::Index>(column)));
  return out;
}

StoredFit read_fit(const std::string& directory, bool with_effects) {
  StoredFit f;
  f.metadata = read_file(directory + "/fit.json");
  try {
    const json j = json::parse(f.metadata);
    f.label = j.value("label", std::string());
    f.data_hash = j.at("data_hash").get<std::string>();
    f.dic = j.at("dic").at("dic").get<double>();
    f.mean_deviance = j.at("dic").at("mean_deviance").get<double>();
    f.deviance_at_mean = j.at("dic").at("deviance_at_mean").get<double>();
    f.chains = j.at("options").at("chains").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, directory + "/fit.json: " + e.what());
  }
  auto load = [&](const std::string& file, std::vector<std::string>& cols, Eigen::MatrixXd& m, bool keep_index) {
    const CsvTable t = parse_csv(read_file(file));
    if (t.header.size() < 2 || t.header[0] != "chain" || t.header[1] != "iteration")
      fail(ErrorKind::Schema, file + ": expected chain,iteration leading columns");
    cols.assign(t.header.begin() + 2, t.header.end());
    m.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (keep_index) {
        f.chain.push_back(static_cast<std::size_t>(parse_cell(t.rows[r][0], file)));
        f.iteration.push_back(static_cast<long>(parse_cell(t.rows[r][1], file)));
      }
      for (std::size_t c = 0; c < cols.size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_cell(t.rows[r][c + 2], file);
    }
  };
  load(directory + "/draws.csv", f.columns, f.draws, true);
  for (std::size_t c : f.chain)
    if (c >= f.chains) fail(ErrorKind::Schema, directory + "/draws.csv: chain index out of range");
  if (with_effects && std::filesystem::exists(directory + "/effects.csv"))
    load(directory + "/effects.csv", f.effect_columns, f.effects, false);
  return f;
}

PosteriorDraws posterior_from_stored(const StoredFit& fit, const ModelData& data) {
  PosteriorDraws p;
  p.layout = DrawLayout::for_model(data);
  if (fit.columns != p.layout.columns) fail(ErrorKind::Schema, "stored draw columns do not match the model");
  p.draws = fit.draws;
  if (fit.effects.size() > 0) {
    if (fit.effect_columns != data.random.column_labels)
      fail(ErrorKind::Schema, "stored effect columns do not match the model");
    p.effects = fit.effects;
  }
  return p;
}

}  // namespace mmglmm
