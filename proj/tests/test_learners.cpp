#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "missfit/datagen.hpp"
#include "missfit/joint.hpp"
#include "missfit/learners.hpp"
#include "missfit/metrics.hpp"
#include "support.hpp"

using namespace missfit;
using namespace testing_support;

namespace {

double sse_of(const Vector& y, const std::vector<Index>& rows) {
  if (rows.empty()) return 0.0;
  double mean = 0;
  for (Index i : rows) mean += y[i];
  mean /= static_cast<double>(rows.size());
  double s = 0;
  for (Index i : rows) s += (y[i] - mean) * (y[i] - mean);
  return s;
}

struct Candidate {
  int feature;
  double threshold;
  MissingSide side;
  double score;
};

// Every (j, tau, side) split with both children holding at least min_leaf rows.
std::vector<Candidate> all_splits(const MaskedDataset& d, Index min_leaf) {
  std::vector<Index> all(static_cast<std::size_t>(d.rows()));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Candidate> out;
  for (Index j = 0; j < d.cols(); ++j) {
    std::set<double> values;
    for (Index i : all)
      if (!d.missing(i, j)) values.insert(d.x(i, j));
    std::vector<double> taus;
    for (auto it = values.begin(); std::next(it) != values.end() && it != values.end(); ++it)
      taus.push_back(0.5 * (*it + *std::next(it)));
    taus.push_back(std::numeric_limits<double>::infinity());
    for (double tau : taus) {
      for (MissingSide side : {MissingSide::Left, MissingSide::Right}) {
        if (std::isinf(tau) && side == MissingSide::Left) continue;
        std::vector<Index> l, r;
        for (Index i : all) {
          const bool left = d.missing(i, j) ? side == MissingSide::Left : d.x(i, j) <= tau;
          (left ? l : r).push_back(i);
        }
        if (static_cast<Index>(l.size()) < min_leaf || static_cast<Index>(r.size()) < min_leaf) continue;
        out.push_back({static_cast<int>(j), tau, side, sse_of(d.y, l) + sse_of(d.y, r)});
      }
    }
  }
  return out;
}

std::vector<Index> leaf_rows(const MiaTree& t, const MaskedDataset& d, int leaf) {
  std::vector<Index> rows;
  for (Index i = 0; i < d.rows(); ++i)
    if (t.leaf_for(d.x.row(i), d.m.row(i)) == leaf) rows.push_back(i);
  return rows;
}

}  // namespace

TEST(CartMia, PureTargetIsSingleLeaf) {
  auto data = random_dataset(40, 3, 0.3, 1);
  data.y.setConstant(4.5);
  const auto tree = fit_cart_mia(data, TreeParams{});
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].value, 4.5);
}

TEST(CartMia, IsolatesMissingnessOfSecondFeature) {
  std::mt19937_64 rng(2);
  const Index n = 200;
  Matrix x = random_matrix(n, 3, rng);
  Mask m = random_mask(n, 3, 0.3, rng);
  std::normal_distribution<double> noise(0.0, 0.1);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = 10.0 * m(i, 1) + noise(rng);
  TreeParams p;
  p.max_depth = 1;
  const auto tree = fit_cart_mia(make_dataset(x, m, y), p);
  ASSERT_EQ(tree.nodes.size(), 3u);
  EXPECT_EQ(tree.nodes[0].feature, 1);
  std::vector<double> leaves{tree.nodes[1].value, tree.nodes[2].value};
  std::sort(leaves.begin(), leaves.end());
  EXPECT_NEAR(leaves[0], 0.0, 0.5);
  EXPECT_NEAR(leaves[1], 10.0, 0.5);
}

TEST(CartMia, RootSplitMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = random_dataset(50, 3, 0.3, 30 + seed);
    TreeParams p;
    p.max_depth = 1;
    p.min_leaf = 3;
    const auto tree = fit_cart_mia(data, p);
    const auto cands = all_splits(data, p.min_leaf);
    ASSERT_FALSE(cands.empty());
    double best = cands[0].score;
    for (const auto& c : cands) best = std::min(best, c.score);
    const double tol = 1e-9 * std::max(1.0, sse_of(data.y, leaf_rows(tree, data, 0)));
    const Candidate* expected = nullptr;
    for (const auto& c : cands) {
      if (c.score > best + tol) continue;
      if (!expected || std::tie(c.feature, c.threshold, c.side) <
                           std::tie(expected->feature, expected->threshold, expected->side))
        expected = &c;
    }
    ASSERT_FALSE(tree.nodes[0].is_leaf());
    EXPECT_EQ(tree.nodes[0].feature, expected->feature) << seed;
    EXPECT_DOUBLE_EQ(tree.nodes[0].threshold, expected->threshold) << seed;
    EXPECT_EQ(tree.nodes[0].missing_side, expected->side) << seed;
  }
}

TEST(CartMia, LeafValuesAreTrainingMeans) {
  const auto data = random_dataset(300, 4, 0.3, 4);
  TreeParams p;
  p.max_depth = 5;
  p.min_leaf = 10;
  const auto tree = fit_cart_mia(data, p);
  EXPECT_LE(tree.depth(), 5);
  Index total = 0;
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    if (!tree.nodes[k].is_leaf()) continue;
    const auto rows = leaf_rows(tree, data, static_cast<int>(k));
    ASSERT_FALSE(rows.empty());
    EXPECT_GE(static_cast<Index>(rows.size()), p.min_leaf);
    double mean = 0;
    for (Index i : rows) mean += data.y[i];
    mean /= static_cast<double>(rows.size());
    EXPECT_NEAR(tree.nodes[k].value, mean, 1e-9);
    EXPECT_EQ(tree.nodes[k].count, static_cast<Index>(rows.size()));
    total += static_cast<Index>(rows.size());
  }
  EXPECT_EQ(total, data.rows());
}

TEST(CartMia, UnseenPatternsStillRoute) {
  const auto data = random_dataset(200, 3, 0.0, 5);
  const auto tree = fit_cart_mia(data, TreeParams{});
  auto probe = random_dataset(50, 3, 0.5, 6);
  const Vector pred = tree.predict(probe);
  EXPECT_TRUE(pred.allFinite());
  probe.m.setOnes();
  EXPECT_TRUE(tree.predict(probe).allFinite());
}

TEST(CartMia, ClassificationLeavesHoldFrequencies) {
  auto data = random_dataset(200, 3, 0.3, 7);
  for (Index i = 0; i < data.rows(); ++i) data.y[i] = data.y[i] > 0 ? 1.0 : 0.0;
  TreeParams p;
  p.task = Task::Classification;
  const auto tree = fit_cart_mia(data, p);
  for (const auto& node : tree.nodes) {
    EXPECT_GE(node.value, 0.0);
    EXPECT_LE(node.value, 1.0);
  }
  EXPECT_GT(auc(data.y, tree.predict(data)), 0.8);
}

TEST(CartMia, BadParamsThrow) {
  TreeParams p;
  p.min_leaf = 0;
  EXPECT_THROW(fit_cart_mia(random_dataset(20, 2, 0.2, 1), p), ContractError);
  p = TreeParams{};
  p.mtry = 3;
  EXPECT_THROW(fit_cart_mia(random_dataset(20, 2, 0.2, 1), p), ContractError);
}

TEST(Forest, DegenerateForestEqualsTree) {
  const auto data = random_dataset(150, 4, 0.3, 8);
  TreeParams p;
  p.n_trees = 1;
  p.mtry = 4;
  p.bootstrap = false;
  const auto forest = fit_forest(data, p);
  const auto tree = fit_cart_mia(data, p);
  EXPECT_EQ(forest.predict(data), tree.predict(data));
}

TEST(Forest, PredictionIsTreeMean) {
  const auto data = random_dataset(100, 3, 0.3, 9);
  TreeParams p;
  p.n_trees = 7;
  const auto forest = fit_forest(data, p);
  Vector mean = Vector::Zero(data.rows());
  for (const auto& t : forest.trees) mean += t.predict(data);
  mean /= 7.0;
  EXPECT_TRUE(forest.predict(data).isApprox(mean, 1e-12));
}

TEST(Forest, TrainingErrorBelowSingleTreeTestError) {
  double forest_train = 0, tree_test = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec spec;
    spec.n = 1000;
    spec.signal = SignalKind::NeuralNet;
    spec.mechanism = Mechanism::MCAR;
    spec.p = 0.3;
    spec.seed = 60 + seed;
    const auto split = generate_split(spec, 0.5, seed);
    const auto& train = split.train.data;
    const auto& test = split.test.data;
    TreeParams p;
    p.max_depth = 8;
    p.n_trees = 50;
    p.seed = seed;
    forest_train += mean_squared_error(train.y, fit_forest(train, p).predict(train));
    tree_test += mean_squared_error(test.y, fit_cart_mia(train, p).predict(test));
  }
  EXPECT_LE(forest_train / 5, tree_test / 5);
}

TEST(Forest, ScramblingMissingEntriesChangesNothing) {
  const auto data = random_dataset(150, 4, 0.35, 10);
  TreeParams p;
  p.n_trees = 20;
  const auto a = fit_forest(data, p);
  const auto b = fit_forest(scramble_missing(data, 3), p);
  EXPECT_EQ(a.predict(data), b.predict(scramble_missing(data, 4)));
}

TEST(Forest, SeedDeterminesForestAcrossThreadCounts) {
  const auto data = random_dataset(150, 4, 0.3, 11);
  TreeParams p;
  p.n_trees = 16;
  p.seed = 99;
  const auto a = fit_forest(data, p);
  p.n_threads = 4;
  const auto b = fit_forest(data, p);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  p.seed = 100;
  EXPECT_NE(fit_forest(data, p).predict(data), a.predict(data));
}

TEST(MeanImpute, HandExample) {
  Matrix x(3, 1);
  x << 1, 0, 3;
  Mask m(3, 1);
  m << 0, 1, 0;
  const auto mi = mean_impute(make_dataset(x, m, Vector::Zero(3)));
  EXPECT_EQ(mi.mu[0], 2.0);
  EXPECT_EQ(mi.imputed(1, 0), 2.0);
}

TEST(MeanImpute, ObservedColumnUnchangedAndEmptyColumnFlagged) {
  auto data = random_dataset(30, 2, 0.0, 12);
  data.m.col(1).setOnes();
  const auto mi = mean_impute(data);
  EXPECT_NEAR(mi.mu[0], data.x.col(0).mean(), 1e-12);
  EXPECT_EQ(mi.imputed.col(0), data.x.col(0));
  EXPECT_FALSE(mi.observed[1]);
  EXPECT_EQ(mi.mu[1], 0.0);
}

TEST(Serialization, TreeAndForestRoundTrip) {
  const auto data = random_dataset(120, 3, 0.3, 13);
  const auto tree = fit_cart_mia(data, TreeParams{});
  EXPECT_EQ(mia_tree_from_json(nlohmann::json::parse(to_json(tree).dump())).predict(data), tree.predict(data));
  TreeParams p;
  p.n_trees = 5;
  const auto forest = fit_forest(data, p);
  EXPECT_EQ(forest_from_json(nlohmann::json::parse(to_json(forest).dump())).predict(data), forest.predict(data));
}
