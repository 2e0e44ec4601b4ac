#include "mmglmm/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "mmglmm/error.hpp"
#include "mmglmm/io.hpp"

namespace mmglmm {

StackedData stack_multivariate(const ObservationTable& table, const std::vector<std::string>& responses) {
  if (responses.empty()) fail(ErrorKind::Design, "no response to stack (P = 0)");
  StackedData s;
  s.n_subjects = table.n_rows;
  s.n_responses = responses.size();
  std::vector<const Column*> cols;
  for (const auto& r : responses) {
    const Column& c = table.column(r);
    if (c.kind != ColumnKind::Numeric) fail(ErrorKind::Schema, "response column '" + r + "' is not numeric");
    if (c.missing_count() > 0) fail(ErrorKind::Schema, "response column '" + r + "' has missing values");
    cols.push_back(&c);
  }
  s.response.reserve(table.n_rows * responses.size());
  for (std::size_t i = 0; i < table.n_rows; ++i)
    for (std::size_t p = 0; p < responses.size(); ++p) {
      s.response.push_back(cols[p]->numbers[i]);
      s.subject.push_back(i);
      s.response_index.push_back(p);
    }
  return s;
}

StackedData stack_for_scoring(std::size_t n_subjects, std::size_t n_responses) {
  if (n_responses == 0) fail(ErrorKind::Design, "no response to stack (P = 0)");
  StackedData s;
  s.n_subjects = n_subjects;
  s.n_responses = n_responses;
  for (std::size_t i = 0; i < n_subjects; ++i)
    for (std::size_t p = 0; p < n_responses; ++p) {
      s.response.push_back(0.0);
      s.subject.push_back(i);
      s.response_index.push_back(p);
    }
  return s;
}

double to_model_scale(const ModelSpec& spec, const DesignRecipe& recipe, std::size_t p, double y) {
  const double g = spec.family.family == Family::GaussianLog ? std::log(y) : y;
  return g / recipe.response_scale[p];
}

namespace {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 1.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

DesignRecipe make_recipe(const ModelSpec& spec, const ObservationTable& table, const HierarchyIndex& hierarchy) {
  DesignRecipe recipe;
  recipe.coding = CategoricalCoding::from_table(table, spec.reference_levels);
  recipe.teams = hierarchy.teams;
  recipe.facilities = hierarchy.facilities;
  recipe.response_scale.assign(spec.n_responses(), 1.0);
  if (spec.scale_responses) {
    for (std::size_t p = 0; p < spec.n_responses(); ++p) {
      const Column& c = table.column(spec.responses[p]);
      std::vector<double> g(c.numbers.begin(), c.numbers.end());
      if (spec.family.family == Family::GaussianLog)
        for (double& v : g) v = std::log(v);
      const double sd = sample_sd(g);
      if (!(sd > 0)) fail(ErrorKind::Design, "response '" + spec.responses[p] + "' has zero variance; cannot scale");
      recipe.response_scale[p] = sd;
    }
  }
  for (const auto& block : spec.random) {
    if (!block.center_scale) continue;
    for (const auto& term : block.terms) {
      if (term.intercept) continue;
      const auto cols = expand_term(term, table, recipe.coding);
      const auto& v = cols.front().values;
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double sd = sample_sd(v);
      if (!(sd > 0)) sd = 1.0;
      recipe.slope_standardization[block.name + "/" + term.label()] = {mean, sd};
    }
  }
  return recipe;
}

FixedDesign build_fixed_design(const ModelSpec& spec, const StackedData& stacked, const ObservationTable& table,
                               const DesignRecipe& recipe, const std::vector<std::string>* row_labels,
                               bool scoring) {
  const std::size_t P = stacked.n_responses;
  const std::size_t n_rows = stacked.size();

  // Raw slots before merging: (label "response:term" or "shared:term", per-stacked-row values).
  struct Slot {
    std::string response;  // empty for shared
    std::string term;
    std::vector<double> subject_values;  // one per subject
  };
  std::vector<Slot> raw;
  if (spec.intercepts)
    for (std::size_t p = 0; p < P; ++p)
      raw.push_back({spec.responses[p], "intercept", std::vector<double>(stacked.n_subjects, 1.0)});
  for (const auto& t : spec.fixed) {
    for (auto& c : expand_term(t.expr, table, recipe.coding, row_labels)) {
      if (t.shared) {
        raw.push_back({"", c.label, c.values});
      } else {
        for (std::size_t p = 0; p < P; ++p) raw.push_back({spec.responses[p], c.label, c.values});
      }
    }
  }

  std::unordered_map<std::string, std::size_t> slot_index;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (!raw[i].response.empty()) slot_index.emplace(raw[i].response + ":" + raw[i].term, i);

  UnionFind uf(raw.size());
  for (const auto& c : spec.constraints) {
    std::vector<std::size_t> ids;
    for (const auto& s : c.slots) {
      auto it = slot_index.find(s);
      if (it == slot_index.end()) fail(ErrorKind::MissingSlot, "constraint references missing coefficient slot '" + s + "'");
      ids.push_back(it->second);
    }
    for (std::size_t k = 1; k < ids.size(); ++k) uf.unite(ids[0], ids[k]);
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < raw.size(); ++i) groups[uf.find(i)].push_back(i);

  FixedDesign fd;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Index col = 0;
  std::vector<std::vector<double>> dense_cols;
  for (const auto& [root, members] : groups) {
    std::vector<double> values(n_rows, 0.0);
    for (std::size_t m : members) {
      const Slot& s = raw[m];
      const auto p_it = std::find(spec.responses.begin(), spec.responses.end(), s.response);
      for (std::size_t row = 0; row < n_rows; ++row) {
        if (!s.response.empty() &&
            stacked.response_index[row] != static_cast<std::size_t>(p_it - spec.responses.begin()))
          continue;
        values[row] += s.subject_values[stacked.subject[row]];
      }
    }
    std::string label;
    std::set<std::string> terms;
    for (std::size_t m : members) terms.insert(raw[m].term);
    if (members.size() == 1) {
      const Slot& s = raw[members[0]];
      label = "gamma:" + (s.response.empty() ? std::string("shared") : s.response) + ":" + s.term;
    } else if (terms.size() == 1) {
      std::string resp;
      for (std::size_t m : members) resp += (resp.empty() ? "" : "+") + raw[m].response;
      label = "gamma:" + resp + ":" + *terms.begin();
    } else {
      std::string slots;
      for (std::size_t m : members) slots += (slots.empty() ? "" : "=") + raw[m].response + "." + raw[m].term;
      label = "gamma:merged:" + slots;
    }
    bool any = false;
    for (std::size_t row = 0; row < n_rows; ++row)
      if (values[row] != 0.0) {
        triplets.emplace_back(static_cast<Eigen::Index>(row), col, values[row]);
        any = true;
      }
    if (!any && !scoring) fail(ErrorKind::Design, "fixed design column '" + label + "' is all zero");
    fd.labels.push_back(label);

    double mean = spec.location_prior.mean;
    double var = spec.location_prior.variance;
    const std::string key = label.substr(6);
    if (auto it = spec.location_prior.overrides.find(key); it != spec.location_prior.overrides.end()) {
      mean = it->second.first;
      var = it->second.second;
    }
    fd.prior_mean.push_back(mean);
    fd.prior_variance.push_back(var);
    dense_cols.push_back(std::move(values));
    ++col;
  }

  // Exact duplicates are reported, not rejected.
  std::map<std::vector<double>, std::size_t> seen;
  for (std::size_t c = 0; c < (scoring ? 0 : dense_cols.size()); ++c) {
    auto [it, inserted] = seen.emplace(dense_cols[c], c);
    if (!inserted)
      spdlog::warn("collinearity: fixed design column '{}' duplicates '{}'", fd.labels[c], fd.labels[it->second]);
  }

  fd.X.resize(static_cast<Eigen::Index>(n_rows), col);
  fd.X.setFromTriplets(triplets.begin(), triplets.end());
  fd.X.makeCompressed();
  return fd;
}

Eigen::MatrixXd evaluate_block_terms(const RandomBlockSpec& block, const ObservationTable& table,
                                     const DesignRecipe& recipe, const std::vector<std::string>* row_labels) {
  Eigen::MatrixXd values(static_cast<Eigen::Index>(table.n_rows), static_cast<Eigen::Index>(block.terms.size()));
  for (std::size_t t = 0; t < block.terms.size(); ++t) {
    const auto& term = block.terms[t];
    const auto cols = expand_term(term, table, recipe.coding, row_labels);
    if (cols.size() != 1) fail(ErrorKind::Design, "random term '" + term.label() + "' must expand to one column");
    double center = 0.0;
    double scale = 1.0;
    if (auto it = recipe.slope_standardization.find(block.name + "/" + term.label());
        it != recipe.slope_standardization.end()) {
      center = it->second.first;
      scale = it->second.second;
    }
    for (std::size_t r = 0; r < table.n_rows; ++r)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = (cols.front().values[r] - center) / scale;
  }
  return values;
}

RandomDesign build_random_design(const ModelSpec& spec, const StackedData& stacked, const ObservationTable& table,
                                 const HierarchyIndex& hierarchy, const DesignRecipe& recipe,
                                 const std::vector<std::string>* row_labels) {
  RandomDesign rd;
  const std::size_t P = stacked.n_responses;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Index offset = 0;
  for (const auto& block : spec.random) {
    RandomBlockLayout layout;
    layout.name = block.name;
    layout.level = block.level;
    layout.offset = offset;
    layout.group_labels = recipe.groups(block.level);
    layout.groups = static_cast<Eigen::Index>(layout.group_labels.size());
    layout.slots = static_cast<Eigen::Index>(block.slot_count(P));
    layout.slot_labels = block.slot_labels(spec.responses);
    const auto& row_group = block.level == BlockLevel::Facility ? hierarchy.row_facility : hierarchy.row_team;
    const Eigen::MatrixXd terms = evaluate_block_terms(block, table, recipe, row_labels);
    for (std::size_t row = 0; row < stacked.size(); ++row) {
      const std::size_t i = stacked.subject[row];
      const std::size_t p = stacked.response_index[row];
      const Eigen::Index g = static_cast<Eigen::Index>(row_group[i]);
      for (Eigen::Index t = 0; t < terms.cols(); ++t) {
        const double v = terms(static_cast<Eigen::Index>(i), t);
        if (v == 0.0) continue;
        triplets.emplace_back(static_cast<Eigen::Index>(row),
                              offset + g * layout.slots + t * static_cast<Eigen::Index>(P) + static_cast<Eigen::Index>(p), v);
      }
    }
    for (Eigen::Index g = 0; g < layout.groups; ++g)
      for (const auto& s : layout.slot_labels)
        rd.column_labels.push_back("eps:" + block.name + ":" + layout.group_labels[static_cast<std::size_t>(g)] + ":" + s);
    offset += layout.width();
    rd.blocks.push_back(std::move(layout));
  }
  rd.W.resize(static_cast<Eigen::Index>(stacked.size()), offset);
  rd.W.setFromTriplets(triplets.begin(), triplets.end());
  rd.W.makeCompressed();
  return rd;
}

ModelData build_model_data(const ModelSpec& spec, const ObservationTable& table, const HierarchyIndex& hierarchy) {
  ModelData data;
  data.spec = spec;
  data.recipe = make_recipe(spec, table, hierarchy);
  data.stacked = stack_multivariate(table, spec.responses);
  data.subject_labels.reserve(table.n_rows);
  for (std::size_t r = 0; r < table.n_rows; ++r) data.subject_labels.push_back(hierarchy.patients[hierarchy.row_patient[r]]);
  data.y.resize(static_cast<Eigen::Index>(data.stacked.size()));
  for (std::size_t row = 0; row < data.stacked.size(); ++row)
    data.y(static_cast<Eigen::Index>(row)) =
        to_model_scale(spec, data.recipe, data.stacked.response_index[row], data.stacked.response[row]);
  data.fixed = build_fixed_design(spec, data.stacked, table, data.recipe, &data.subject_labels);
  data.random = build_random_design(spec, data.stacked, table, hierarchy, data.recipe, &data.subject_labels);
  return data;
}

void dump_design(const ModelData& data, const std::string& directory) {
  std::ostringstream x;
  x << "row";
  for (const auto& l : data.fixed.labels) x << ',' << l;
  x << '\n';
  const Eigen::MatrixXd dense = Eigen::MatrixXd(data.fixed.X);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    x << r;
    for (Eigen::Index c = 0; c < dense.cols(); ++c) x << ',' << format_double(dense(r, c));
    x << '\n';
  }
  write_file_atomic(directory + "/X.csv", x.str());

  std::ostringstream w;
  w << "row,column,value\n";
  for (Eigen::Index r = 0; r < data.random.W.outerSize(); ++r)
    for (SparseRowMatrix::InnerIterator it(data.random.W, r); it; ++it)
      w << r << ',' << data.random.column_labels[static_cast<std::size_t>(it.col())] << ',' << format_double(it.value())
        << '\n';
  write_file_atomic(directory + "/W.csv", w.str());
}

}  // namespace mmglmm
