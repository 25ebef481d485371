#include "missfit/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>

namespace missfit {
namespace {

// Lexicographic k-subsets of `pool`, appended to `out`.
void subsets_of_size(const std::vector<int>& pool, int k,
                     std::vector<std::vector<int>>& out) {
  const int n = static_cast<int>(pool.size());
  if (k > n) return;
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    std::vector<int> s(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) s[i] = pool[idx[i]];
    out.push_back(std::move(s));
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int t = i + 1; t < k; ++t) idx[t] = idx[t - 1] + 1;
  }
}

void check_mode(Index d, const ExpansionMode& mode) {
  if (mode.kind == ExpansionKind::Polynomial &&
      (mode.degree < 1 || mode.degree > d)) {
    throw ContractError(fmt::format(
        "polynomial degree must be in [1, d={}], got {}", d, mode.degree));
  }
}

double term_value(const ExpansionTerm& t, const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const MaskVector>& m) {
  double v = 1.0;
  if (t.feature >= 0) v = m[t.feature] ? 0.0 : x[t.feature];
  for (int k : t.mask_factors) {
    if (!m[k]) return 0.0;
  }
  return v;
}

double sse_of(const LinearFit& fit, const Matrix& z, const Vector& y) {
  return (y - fit.predict(z)).squaredNorm();
}

LinearFit fit_static_rows(const MaskedDataset& data,
                          const std::vector<Index>& rows,
                          const ElasticNetSpec& spec, double* sse) {
  const MaskedDataset part = subset_rows(data, rows);
  const Matrix z = expand_dataset(part, ExpansionMode::static_mode());
  ElasticNetSpec s = spec;
  if (s.penalty_weights.empty()) s.penalty_weights = support_penalty_weights(z);
  LinearFit fit = fit_elastic_net(z, part.y, s);
  if (sse != nullptr) *sse = sse_of(fit, z, part.y);
  return fit;
}

Vector row_of(const Matrix& x, Index i) { return x.row(i).transpose(); }
MaskVector row_of(const Mask& m, Index i) { return m.row(i).transpose(); }

}  // namespace

std::string ExpansionMode::name() const {
  switch (kind) {
    case ExpansionKind::Static: return "static";
    case ExpansionKind::AffineIntercept: return "affine-intercept";
    case ExpansionKind::Affine: return "affine";
    case ExpansionKind::Polynomial: return fmt::format("poly{}", degree);
    case ExpansionKind::FullyAdaptive: return "fully-adaptive";
  }
  return "unknown";
}

ExpansionMode ExpansionMode::parse(const std::string& name) {
  if (name == "static") return static_mode();
  if (name == "affine-intercept") return affine_intercept();
  if (name == "affine") return affine();
  if (name == "fully-adaptive") return fully_adaptive();
  if (name.rfind("poly", 0) == 0 && name.size() > 4) {
    try {
      std::size_t used = 0;
      const int t = std::stoi(name.substr(4), &used);
      if (used == name.size() - 4) return polynomial(t);
    } catch (const std::exception&) {
    }
  }
  throw ContractError(fmt::format("unknown expansion mode '{}'", name));
}

std::vector<ExpansionTerm> expansion_layout(Index d, const ExpansionMode& mode) {
  check_mode(d, mode);
  const int di = static_cast<int>(d);
  std::vector<ExpansionTerm> terms;
  for (int j = 0; j < di; ++j) terms.push_back({j, {}});
  switch (mode.kind) {
    case ExpansionKind::Static:
    case ExpansionKind::FullyAdaptive:
      break;
    case ExpansionKind::AffineIntercept:
      for (int j = 0; j < di; ++j) terms.push_back({-1, {j}});
      break;
    case ExpansionKind::Affine:
      for (int j = 0; j < di; ++j) {
        for (int k = 0; k < di; ++k) {
          terms.push_back(k == j ? ExpansionTerm{-1, {k}} : ExpansionTerm{j, {k}});
        }
      }
      break;
    case ExpansionKind::Polynomial: {
      terms.clear();
      for (int j = 0; j < di; ++j) {
        std::vector<int> others;
        for (int k = 0; k < di; ++k) {
          if (k != j) others.push_back(k);
        }
        for (int s = 0; s <= mode.degree; ++s) {
          std::vector<std::vector<int>> subs;
          subsets_of_size(others, s, subs);
          for (auto& sub : subs) terms.push_back({j, std::move(sub)});
        }
      }
      std::vector<int> all(static_cast<std::size_t>(di));
      for (int k = 0; k < di; ++k) all[k] = k;
      for (int s = 1; s <= mode.degree; ++s) {
        std::vector<std::vector<int>> subs;
        subsets_of_size(all, s, subs);
        for (auto& sub : subs) terms.push_back({-1, std::move(sub)});
      }
      break;
    }
  }
  return terms;
}

Index expansion_size(Index d, const ExpansionMode& mode) {
  return static_cast<Index>(expansion_layout(d, mode).size());
}

Vector expand(const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const MaskVector>& m, const ExpansionMode& mode) {
  if (x.size() != m.size()) {
    throw ContractError(fmt::format("expand: x has {} entries, m has {}", x.size(), m.size()));
  }
  const auto terms = expansion_layout(x.size(), mode);
  Vector out(static_cast<Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) out[t] = term_value(terms[t], x, m);
  return out;
}

Matrix expand_dataset(const MaskedDataset& data, const ExpansionMode& mode) {
  const auto terms = expansion_layout(data.cols(), mode);
  const Index n = data.rows();
  Matrix z(n, static_cast<Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& term = terms[t];
    auto col = z.col(static_cast<Index>(t));
    for (Index i = 0; i < n; ++i) {
      double v = 1.0;
      if (term.feature >= 0) v = data.m(i, term.feature) ? 0.0 : data.x(i, term.feature);
      for (int k : term.mask_factors) {
        if (!data.m(i, k)) {
          v = 0.0;
          break;
        }
      }
      col[i] = v;
    }
  }
  return z;
}

double AdaptiveModel::predict(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const MaskVector>& m) const {
  if (x.size() != d || m.size() != d) {
    throw ContractError(fmt::format("adaptive predict: model has d={}, input has {}", d, x.size()));
  }
  if (mode.kind == ExpansionKind::FullyAdaptive) {
    PatternKey key;
    key.bits.assign(m.data(), m.data() + m.size());
    for (auto& b : key.bits) b = b ? 1 : 0;
    auto it = std::lower_bound(
        pattern_fits.begin(), pattern_fits.end(), key,
        [](const PatternFit& pf, const PatternKey& k) { return pf.key < k; });
    const LinearFit& f = (it != pattern_fits.end() && it->key == key) ? it->fit : fit;
    return f.intercept + masked_dot(f.coefficients, x, m);
  }
  const Vector z = expand(x, m, mode);
  return fit.predict_row(z.transpose());
}

Vector AdaptiveModel::predict(const MaskedDataset& data) const {
  if (data.cols() != d) {
    throw ContractError(fmt::format("adaptive predict: model has d={}, data has {}", d, data.cols()));
  }
  if (mode.kind == ExpansionKind::FullyAdaptive) {
    Vector out(data.rows());
    for (Index i = 0; i < data.rows(); ++i) out[i] = predict(row_of(data.x, i), row_of(data.m, i));
    return out;
  }
  return fit.predict(expand_dataset(data, mode));
}

AdaptiveModel fit_adaptive(const MaskedDataset& data, const ExpansionMode& mode,
                           const ElasticNetSpec& spec) {
  validate(data);
  if (data.rows() < 2) throw ContractError("fit_adaptive: need at least 2 rows");
  check_mode(data.cols(), mode);

  AdaptiveModel model;
  model.mode = mode;
  model.d = data.cols();

  if (mode.kind == ExpansionKind::FullyAdaptive) {
    std::vector<Index> all(static_cast<std::size_t>(data.rows()));
    for (Index i = 0; i < data.rows(); ++i) all[i] = i;
    model.fit = fit_static_rows(data, all, spec, nullptr);
    for (const auto& group : unique_patterns(data)) {
      model.pattern_fits.push_back(
          {group.key, static_cast<Index>(group.rows.size()),
           fit_static_rows(data, group.rows, spec, nullptr)});
    }
    std::sort(model.pattern_fits.begin(), model.pattern_fits.end(),
              [](const PatternFit& a, const PatternFit& b) { return a.key < b.key; });
    model.expansion_size = model.d * static_cast<Index>(model.pattern_fits.size());
    return model;
  }

  const Matrix z = expand_dataset(data, mode);
  ElasticNetSpec s = spec;
  if (s.penalty_weights.empty()) s.penalty_weights = support_penalty_weights(z);
  model.fit = fit_elastic_net(z, data.y, s);
  model.expansion_size = z.cols();
  return model;
}

int PartitionTree::leaf_for(const Eigen::Ref<const MaskVector>& m) const {
  if (m.size() != d) throw ContractError("partition tree: pattern length mismatch");
  int node = 0;
  while (!nodes[node].is_leaf()) {
    node = m[nodes[node].feature] ? nodes[node].missing : nodes[node].observed;
  }
  return node;
}

double PartitionTree::predict(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const MaskVector>& m) const {
  if (x.size() != d) throw ContractError("partition tree: feature length mismatch");
  const LinearFit& f = nodes[leaf_for(m)].fit;
  return f.intercept + masked_dot(f.coefficients, x, m);
}

Vector PartitionTree::predict(const MaskedDataset& data) const {
  if (data.cols() != d) throw ContractError("partition tree: feature count mismatch");
  Vector out(data.rows());
  for (Index i = 0; i < data.rows(); ++i) out[i] = predict(row_of(data.x, i), row_of(data.m, i));
  return out;
}

int PartitionTree::depth() const {
  int deepest = 0;
  for (const auto& n : nodes) deepest = std::max(deepest, n.depth);
  return deepest;
}

std::vector<int> PartitionTree::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (nodes[i].is_leaf()) out.push_back(i);
  }
  return out;
}

PartitionSplit best_partition_split(const MaskedDataset& data,
                                    const std::vector<Index>& rows,
                                    const ElasticNetSpec& spec, Index min_leaf) {
  PartitionSplit best;
  const Index floor = std::max<Index>(min_leaf, 1);
  for (Index j = 0; j < data.cols(); ++j) {
    std::vector<Index> obs;
    std::vector<Index> miss;
    for (Index i : rows) (data.m(i, j) ? miss : obs).push_back(i);
    if (static_cast<Index>(obs.size()) < floor || static_cast<Index>(miss.size()) < floor) {
      continue;
    }
    double sse_obs = 0.0;
    double sse_miss = 0.0;
    fit_static_rows(data, obs, spec, &sse_obs);
    fit_static_rows(data, miss, spec, &sse_miss);
    const double total = sse_obs + sse_miss;
    if (best.feature < 0 || total < best.sse) {
      best.feature = static_cast<int>(j);
      best.sse = total;
    }
  }
  return best;
}

PartitionTree fit_finite_adaptive(const MaskedDataset& data,
                                  const ElasticNetSpec& spec,
                                  const FiniteAdaptiveParams& params) {
  validate(data);
  if (data.rows() < 2) throw ContractError("fit_finite_adaptive: need at least 2 rows");
  if (params.max_depth < 0 || params.min_leaf < 1 || params.min_gain < 0.0) {
    throw ContractError("fit_finite_adaptive: invalid stopping parameters");
  }

  PartitionTree tree;
  tree.d = data.cols();

  struct Pending {
    int node;
    std::vector<Index> rows;
  };
  auto make_node = [&](const std::vector<Index>& rows, int depth) {
    PartitionNode node;
    node.depth = depth;
    node.rows = static_cast<Index>(rows.size());
    node.fit = fit_static_rows(data, rows, spec, &node.sse);
    tree.nodes.push_back(std::move(node));
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  std::vector<Index> all(static_cast<std::size_t>(data.rows()));
  for (Index i = 0; i < data.rows(); ++i) all[i] = i;
  std::deque<Pending> queue;
  queue.push_back({make_node(all, 0), std::move(all)});

  while (!queue.empty()) {
    Pending cur = std::move(queue.front());
    queue.pop_front();
    const int depth = tree.nodes[cur.node].depth;
    const double parent_sse = tree.nodes[cur.node].sse;
    if (depth >= params.max_depth) continue;
    if (static_cast<Index>(cur.rows.size()) < 2 * params.min_leaf) continue;
    if (parent_sse <= 0.0) continue;

    const PartitionSplit split = best_partition_split(data, cur.rows, spec, params.min_leaf);
    if (split.feature < 0) continue;
    if ((parent_sse - split.sse) / parent_sse < params.min_gain) continue;

    std::vector<Index> obs;
    std::vector<Index> miss;
    for (Index i : cur.rows) (data.m(i, split.feature) ? miss : obs).push_back(i);
    const int obs_node = make_node(obs, depth + 1);
    const int miss_node = make_node(miss, depth + 1);
    tree.nodes[cur.node].feature = split.feature;
    tree.nodes[cur.node].observed = obs_node;
    tree.nodes[cur.node].missing = miss_node;
    queue.push_back({obs_node, std::move(obs)});
    queue.push_back({miss_node, std::move(miss)});
  }
  return tree;
}

Imputation imputation_from_coefficients(const Vector& w, const Vector& b) {
  if (w.size() != b.size()) throw ContractError("imputation: w and b lengths differ");
  Imputation imp;
  imp.mu = Vector::Zero(w.size());
  imp.valid.assign(static_cast<std::size_t>(w.size()), false);
  for (Index j = 0; j < w.size(); ++j) {
    if (std::abs(w[j]) < 1e-8) continue;
    imp.mu[j] = b[j] / w[j];
    imp.valid[j] = true;
  }
  return imp;
}

Imputation extract_imputation(const AdaptiveModel& model) {
  if (model.mode.kind != ExpansionKind::AffineIntercept) {
    throw ContractError(fmt::format(
        "extract_imputation requires an affine-intercept model, got '{}'", model.mode.name()));
  }
  const Index d = model.d;
  return imputation_from_coefficients(model.fit.coefficients.head(d),
                                      model.fit.coefficients.segment(d, d));
}

nlohmann::json to_json(const LinearFit& fit) {
  return {{"intercept", fit.intercept},
          {"coefficients", std::vector<double>(fit.coefficients.begin(), fit.coefficients.end())},
          {"iterations", fit.iterations},
          {"converged", fit.converged}};
}

LinearFit linear_fit_from_json(const nlohmann::json& j) {
  LinearFit fit;
  fit.intercept = j.at("intercept").get<double>();
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  fit.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Index>(coef.size()));
  fit.iterations = j.value("iterations", 0);
  fit.converged = j.value("converged", true);
  return fit;
}

nlohmann::json to_json(const AdaptiveModel& model) {
  nlohmann::json j = {{"kind", "adaptive"},
                      {"mode", model.mode.name()},
                      {"d", model.d},
                      {"expansion_size", model.expansion_size},
                      {"fit", to_json(model.fit)}};
  if (model.mode.kind == ExpansionKind::FullyAdaptive) {
    auto arr = nlohmann::json::array();
    for (const auto& pf : model.pattern_fits) {
      arr.push_back({{"pattern", pf.key.to_string()}, {"rows", pf.rows}, {"fit", to_json(pf.fit)}});
    }
    j["pattern_fits"] = std::move(arr);
  }
  return j;
}

AdaptiveModel adaptive_model_from_json(const nlohmann::json& j) {
  AdaptiveModel model;
  model.mode = ExpansionMode::parse(j.at("mode").get<std::string>());
  model.d = j.at("d").get<Index>();
  model.expansion_size = j.at("expansion_size").get<Index>();
  model.fit = linear_fit_from_json(j.at("fit"));
  if (j.contains("pattern_fits")) {
    for (const auto& pj : j.at("pattern_fits")) {
      PatternFit pf;
      for (char c : pj.at("pattern").get<std::string>()) pf.key.bits.push_back(c == '1' ? 1 : 0);
      pf.rows = pj.at("rows").get<Index>();
      pf.fit = linear_fit_from_json(pj.at("fit"));
      model.pattern_fits.push_back(std::move(pf));
    }
  }
  return model;
}

nlohmann::json to_json(const PartitionTree& tree) {
  auto nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"feature", n.feature},
                     {"observed", n.observed},
                     {"missing", n.missing},
                     {"depth", n.depth},
                     {"rows", n.rows},
                     {"sse", n.sse},
                     {"fit", to_json(n.fit)}});
  }
  return {{"kind", "finite-adaptive"}, {"d", tree.d}, {"nodes", std::move(nodes)}};
}

PartitionTree partition_tree_from_json(const nlohmann::json& j) {
  PartitionTree tree;
  tree.d = j.at("d").get<Index>();
  for (const auto& nj : j.at("nodes")) {
    PartitionNode n;
    n.feature = nj.at("feature").get<int>();
    n.observed = nj.at("observed").get<int>();
    n.missing = nj.at("missing").get<int>();
    n.depth = nj.at("depth").get<int>();
    n.rows = nj.at("rows").get<Index>();
    n.sse = nj.at("sse").get<double>();
    n.fit = linear_fit_from_json(nj.at("fit"));
    tree.nodes.push_back(std::move(n));
  }
  return tree;
}

}  // namespace missfit
