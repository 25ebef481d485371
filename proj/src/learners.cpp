#include "missfit/learners.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "missfit/joint.hpp"

namespace missfit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Stats {
  double count = 0.0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double y) {
    count += 1.0;
    sum += y;
    sumsq += y * y;
  }
  Stats operator+(const Stats& o) const {
    return {count + o.count, sum + o.sum, sumsq + o.sumsq};
  }
  Stats operator-(const Stats& o) const {
    return {count - o.count, sum - o.sum, sumsq - o.sumsq};
  }
};

double impurity_of(const Stats& s, Task task) {
  if (s.count <= 0.0) return 0.0;
  if (task == Task::Classification) {
    const double p = s.sum / s.count;
    return s.count * (1.0 - p * p - (1.0 - p) * (1.0 - p));
  }
  return std::max(0.0, s.sumsq - s.sum * s.sum / s.count);
}

bool is_pure(const Vector& y, const std::vector<Index>& rows) {
  for (Index i : rows) {
    if (y[i] != y[rows.front()]) return false;
  }
  return true;
}

double mean_of(const Vector& y, const std::vector<Index>& rows) {
  double s = 0.0;
  for (Index i : rows) s += y[i];
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

class TreeBuilder {
 public:
  TreeBuilder(const MaskedDataset& data, const TreeParams& params, int mtry,
              std::mt19937_64* rng)
      : data_(data), params_(params), mtry_(mtry), rng_(rng) {
    tree_.d = data.cols();
    tree_.task = params.task;
  }

  MiaTree build(std::vector<Index> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  std::vector<Index> candidate_features() {
    std::vector<Index> feats(static_cast<std::size_t>(data_.cols()));
    std::iota(feats.begin(), feats.end(), Index{0});
    if (rng_ != nullptr && mtry_ > 0 && mtry_ < data_.cols()) {
      // Partial Fisher-Yates: first mtry entries are a uniform sample.
      for (int k = 0; k < mtry_; ++k) {
        std::uniform_int_distribution<Index> pick(k, data_.cols() - 1);
        std::swap(feats[k], feats[pick(*rng_)]);
      }
      feats.resize(static_cast<std::size_t>(mtry_));
      std::sort(feats.begin(), feats.end());
    }
    return feats;
  }

  int grow(std::vector<Index> rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes[id].value = mean_of(data_.y, rows);
    tree_.nodes[id].count = static_cast<Index>(rows.size());

    if (depth >= params_.max_depth) return id;
    if (static_cast<Index>(rows.size()) < 2 * params_.min_leaf) return id;
    if (is_pure(data_.y, rows)) return id;

    const auto split = best_mia_split(data_, rows, candidate_features(),
                                      params_.min_leaf, params_.task);
    if (!split) return id;
    const double parent = node_impurity(data_.y, rows, params_.task);
    if (!(split->impurity < parent - 1e-12 * std::max(1.0, parent))) return id;

    std::vector<Index> left;
    std::vector<Index> right;
    for (Index i : rows) {
      const bool go_left = data_.m(i, split->feature)
                               ? split->missing_side == MissingSide::Left
                               : data_.x(i, split->feature) <= split->threshold;
      (go_left ? left : right).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.missing_side = split->missing_side;
    node.left = l;
    node.right = r;
    return id;
  }

  const MaskedDataset& data_;
  const TreeParams& params_;
  int mtry_;
  std::mt19937_64* rng_;
  MiaTree tree_;
};

int default_forest_mtry(Index d) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
}

}  // namespace

void TreeParams::check(Index d) const {
  if (max_depth < 0) throw ContractError("tree: max_depth must be >= 0");
  if (min_leaf < 1) throw ContractError("tree: min_leaf must be >= 1");
  if (n_trees < 1) throw ContractError("forest: n_trees must be >= 1");
  if (mtry < 0 || mtry > d) {
    throw ContractError(fmt::format("tree: mtry must be in [0, d={}], got {}", d, mtry));
  }
  if (n_threads < 1) throw ContractError("forest: n_threads must be >= 1");
}

int MiaTree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                      const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& m) const {
  int node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    const bool go_left = m[n.feature] ? n.missing_side == MissingSide::Left
                                      : x[n.feature] <= n.threshold;
    node = go_left ? n.left : n.right;
  }
  return node;
}

Vector MiaTree::predict(const MaskedDataset& data) const {
  if (data.cols() != d) throw ContractError("mia tree: feature count mismatch");
  Vector out(data.rows());
  for (Index i = 0; i < data.rows(); ++i) {
    out[i] = nodes[leaf_for(data.x.row(i), data.m.row(i))].value;
  }
  return out;
}

Vector MiaTree::predict(const Matrix& x) const {
  if (x.cols() != d) throw ContractError("mia tree: feature count mismatch");
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    int node = 0;
    while (!nodes[node].is_leaf()) {
      const auto& n = nodes[node];
      node = x(i, n.feature) <= n.threshold ? n.left : n.right;
    }
    out[i] = nodes[node].value;
  }
  return out;
}

int MiaTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[nodes[i].left] = level[i] + 1;
      level[nodes[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

double node_impurity(const Vector& y, const std::vector<Index>& rows, Task task) {
  Stats s;
  for (Index i : rows) s.add(y[i]);
  return impurity_of(s, task);
}

std::optional<MiaSplit> best_mia_split(const MaskedDataset& data,
                                       const std::vector<Index>& rows,
                                       const std::vector<Index>& features,
                                       Index min_leaf, Task task) {
  const double floor = static_cast<double>(std::max<Index>(min_leaf, 1));
  const double parent = node_impurity(data.y, rows, task);
  const double tie_tol = 1e-12 * std::max(1.0, parent);

  std::optional<MiaSplit> best;
  auto consider = [&](Index j, double tau, MissingSide side, const Stats& l, const Stats& r) {
    if (l.count < floor || r.count < floor) return;
    const double score = impurity_of(l, task) + impurity_of(r, task);
    if (!best || score < best->impurity - tie_tol) {
      best = MiaSplit{static_cast<int>(j), tau, side, score};
    }
  };

  std::vector<std::pair<double, Index>> obs;
  obs.reserve(rows.size());
  for (Index j : features) {
    obs.clear();
    Stats miss;
    for (Index i : rows) {
      if (data.m(i, j)) {
        miss.add(data.y[i]);
      } else {
        obs.emplace_back(data.x(i, j), i);
      }
    }
    std::sort(obs.begin(), obs.end());
    Stats all_obs;
    for (const auto& [v, i] : obs) all_obs.add(data.y[i]);

    Stats prefix;
    for (std::size_t k = 0; k + 1 < obs.size(); ++k) {
      prefix.add(data.y[obs[k].second]);
      const double lo = obs[k].first;
      const double hi = obs[k + 1].first;
      if (!(lo < hi)) continue;
      double tau = lo + 0.5 * (hi - lo);
      if (!(tau < hi)) tau = lo;
      const Stats suffix = all_obs - prefix;
      consider(j, tau, MissingSide::Left, prefix + miss, suffix);
      consider(j, tau, MissingSide::Right, prefix, suffix + miss);
    }
    consider(j, kInf, MissingSide::Right, all_obs, miss);
  }
  return best;
}

MiaTree fit_cart_mia(const MaskedDataset& data, const TreeParams& params) {
  validate(data);
  params.check(data.cols());
  std::vector<Index> rows(static_cast<std::size_t>(data.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  TreeBuilder builder(data, params, params.mtry, nullptr);
  return builder.build(std::move(rows));
}

Forest fit_forest(const MaskedDataset& data, const TreeParams& params) {
  validate(data);
  params.check(data.cols());
  Forest forest;
  forest.task = params.task;
  forest.mtry = params.mtry > 0 ? params.mtry : default_forest_mtry(data.cols());
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  forest.seeds.resize(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    forest.seeds[t] = derive_seed(params.seed, static_cast<std::uint64_t>(t));
  }

  const Index n = data.rows();
  auto fit_one = [&](int t) {
    std::mt19937_64 rng(forest.seeds[t]);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      std::uniform_int_distribution<Index> draw(0, n - 1);
      for (auto& r : rows) r = draw(rng);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    TreeBuilder builder(data, params, forest.mtry, &rng);
    forest.trees[t] = builder.build(std::move(rows));
  };

  const int workers = std::min(params.n_threads, params.n_trees);
  if (workers <= 1) {
    for (int t = 0; t < params.n_trees; ++t) fit_one(t);
    return forest;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int t = next++; t < params.n_trees; t = next++) fit_one(t);
    });
  }
  for (auto& th : pool) th.join();
  return forest;
}

Vector Forest::predict(const MaskedDataset& data) const {
  Vector acc = Vector::Zero(data.rows());
  for (const auto& tree : trees) acc += tree.predict(data);
  return acc / static_cast<double>(trees.size());
}

Vector Forest::predict(const Matrix& x) const {
  Vector acc = Vector::Zero(x.rows());
  for (const auto& tree : trees) acc += tree.predict(x);
  return acc / static_cast<double>(trees.size());
}

MeanImputation mean_impute(const MaskedDataset& data) {
  validate(data);
  MeanImputation out;
  out.mu = Vector::Zero(data.cols());
  out.observed.assign(static_cast<std::size_t>(data.cols()), false);
  for (Index j = 0; j < data.cols(); ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < data.rows(); ++i) {
      if (!data.missing(i, j)) {
        sum += data.x(i, j);
        ++count;
      }
    }
    if (count > 0) {
      out.mu[j] = sum / static_cast<double>(count);
      out.observed[j] = true;
    }
  }
  out.imputed = impute_with(data, out.mu);
  return out;
}

namespace {

const char* task_name(Task t) { return t == Task::Classification ? "classification" : "regression"; }
Task task_from(const std::string& s) {
  return s == "classification" ? Task::Classification : Task::Regression;
}

}  // namespace

nlohmann::json to_json(const MiaTree& tree) {
  auto nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nlohmann::json nj = {{"feature", n.feature},
                         {"value", n.value},
                         {"count", n.count}};
    if (!n.is_leaf()) {
      nj["threshold"] = std::isinf(n.threshold) ? nlohmann::json(nullptr) : nlohmann::json(n.threshold);
      nj["missing_side"] = n.missing_side == MissingSide::Left ? "left" : "right";
      nj["left"] = n.left;
      nj["right"] = n.right;
    }
    nodes.push_back(std::move(nj));
  }
  return {{"kind", "mia-tree"}, {"d", tree.d}, {"task", task_name(tree.task)}, {"nodes", std::move(nodes)}};
}

MiaTree mia_tree_from_json(const nlohmann::json& j) {
  MiaTree tree;
  tree.d = j.at("d").get<Index>();
  tree.task = task_from(j.value("task", std::string("regression")));
  for (const auto& nj : j.at("nodes")) {
    MiaNode n;
    n.feature = nj.at("feature").get<int>();
    n.value = nj.at("value").get<double>();
    n.count = nj.at("count").get<Index>();
    if (n.feature >= 0) {
      const auto& th = nj.at("threshold");
      n.threshold = th.is_null() ? kInf : th.get<double>();
      n.missing_side = nj.at("missing_side").get<std::string>() == "left" ? MissingSide::Left
                                                                           : MissingSide::Right;
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
    }
    tree.nodes.push_back(n);
  }
  return tree;
}

nlohmann::json to_json(const Forest& forest) {
  auto trees = nlohmann::json::array();
  for (const auto& t : forest.trees) trees.push_back(to_json(t));
  return {{"kind", "forest"},
          {"mtry", forest.mtry},
          {"task", task_name(forest.task)},
          {"seeds", forest.seeds},
          {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& j) {
  Forest forest;
  forest.mtry = j.at("mtry").get<int>();
  forest.task = task_from(j.value("task", std::string("regression")));
  forest.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& tj : j.at("trees")) forest.trees.push_back(mia_tree_from_json(tj));
  return forest;
}

}  // namespace missfit
