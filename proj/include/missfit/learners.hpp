#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "missfit/core.hpp"

namespace missfit {

enum class Task { Regression, Classification };

struct TreeParams {
  int max_depth = 6;
  Index min_leaf = 5;
  int n_trees = 100;
  int mtry = 0;  // features tried per split; 0 = all (tree) or ceil(sqrt d) (forest)
  std::uint64_t seed = 0;
  bool bootstrap = true;
  int n_threads = 1;
  Task task = Task::Regression;

  void check(Index d) const;
};

enum class MissingSide : std::uint8_t { Left = 0, Right = 1 };

// Observed rows go left when x <= threshold; missing rows go to
// `missing_side`. threshold = +inf with missing_side = Right is the pure
// "missing vs observed" split.
struct MiaNode {
  int feature = -1;
  double threshold = 0.0;
  MissingSide missing_side = MissingSide::Left;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target (class-1 frequency for classification)
  Index count = 0;

  bool is_leaf() const { return feature < 0; }
};

struct MiaTree {
  Index d = 0;
  Task task = Task::Regression;
  std::vector<MiaNode> nodes;

  int leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x,
               const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& m) const;
  Vector predict(const MaskedDataset& data) const;
  // Fully observed input.
  Vector predict(const Matrix& x) const;
  int depth() const;
};

struct MiaSplit {
  int feature = -1;
  double threshold = 0.0;
  MissingSide missing_side = MissingSide::Left;
  double impurity = 0.0;  // summed child impurity
};

// Impurity of a set of targets: SSE for regression, n * Gini for
// classification.
double node_impurity(const Vector& y, const std::vector<Index>& rows, Task task);

// Best MIA split over `features` (ascending order assumed for tie-breaking),
// ties resolved toward the lowest (feature, threshold, side).
std::optional<MiaSplit> best_mia_split(const MaskedDataset& data,
                                       const std::vector<Index>& rows,
                                       const std::vector<Index>& features,
                                       Index min_leaf, Task task);

MiaTree fit_cart_mia(const MaskedDataset& data, const TreeParams& params);

struct Forest {
  std::vector<MiaTree> trees;
  std::vector<std::uint64_t> seeds;
  int mtry = 0;
  Task task = Task::Regression;

  Vector predict(const MaskedDataset& data) const;
  Vector predict(const Matrix& x) const;
};

Forest fit_forest(const MaskedDataset& data, const TreeParams& params);

struct MeanImputation {
  Vector mu;
  std::vector<bool> observed;  // false where the column had no observed value
  Matrix imputed;
};

MeanImputation mean_impute(const MaskedDataset& data);

nlohmann::json to_json(const MiaTree& tree);
MiaTree mia_tree_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& j);

}  // namespace missfit
