#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "missfit/core.hpp"
#include "missfit/elasticnet.hpp"

namespace missfit {

enum class ExpansionKind { Static, AffineIntercept, Affine, Polynomial, FullyAdaptive };

struct ExpansionMode {
  ExpansionKind kind = ExpansionKind::Static;
  int degree = 0;  // Polynomial only

  static ExpansionMode static_mode() { return {ExpansionKind::Static, 0}; }
  static ExpansionMode affine_intercept() { return {ExpansionKind::AffineIntercept, 0}; }
  static ExpansionMode affine() { return {ExpansionKind::Affine, 0}; }
  static ExpansionMode polynomial(int t) { return {ExpansionKind::Polynomial, t}; }
  static ExpansionMode fully_adaptive() { return {ExpansionKind::FullyAdaptive, 0}; }

  // "static", "affine-intercept", "affine", "poly2", "fully-adaptive"
  std::string name() const;
  static ExpansionMode parse(const std::string& name);

  friend bool operator==(const ExpansionMode&, const ExpansionMode&) = default;
};

// One expanded column: value = base * prod_{k in mask_factors} m_k, where
// base is (1 - m_f) x_f for a feature f, or the constant 1 when feature < 0
// (the always-observed intercept feature, so the intercept adapts as well).
struct ExpansionTerm {
  int feature = -1;
  std::vector<int> mask_factors;
};

// Column layout of an expansion. Ordering:
//   Static           (1-m_j) x_j                     j = 0..d-1
//   AffineIntercept  Static ++ m_j                   j = 0..d-1
//   Affine           Static ++ block W, slot d + j*d + k holds
//                    m_k (1-m_j) x_j for k != j and m_j for k == j
//                    (the product is identically zero on the diagonal, so the
//                    slot carries the adaptive intercept instead)
//   Polynomial(t)    for each feature j, subsets J of the other features with
//                    |J| = 0..t in lexicographic order: (1-m_j) x_j prod_J m;
//                    then intercept monomials prod_J m for |J| = 1..t
// FullyAdaptive has no single layout; it uses Static per pattern.
std::vector<ExpansionTerm> expansion_layout(Index d, const ExpansionMode& mode);

Index expansion_size(Index d, const ExpansionMode& mode);

Vector expand(const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const MaskVector>& m, const ExpansionMode& mode);

// Row-wise expansion of a whole dataset (n x p).
Matrix expand_dataset(const MaskedDataset& data, const ExpansionMode& mode);

struct PatternFit {
  PatternKey key;
  Index rows = 0;
  LinearFit fit;
};

struct AdaptiveModel {
  ExpansionMode mode;
  Index d = 0;
  Index expansion_size = 0;
  LinearFit fit;  // over the expanded design; for FullyAdaptive, the
                  // all-rows Static fallback used on unseen patterns
  std::vector<PatternFit> pattern_fits;  // FullyAdaptive only

  double predict(const Eigen::Ref<const Vector>& x,
                 const Eigen::Ref<const MaskVector>& m) const;
  Vector predict(const MaskedDataset& data) const;
};

// When spec.penalty_weights is empty, weights come from the support counts of
// the expanded columns (support_penalty_weights).
AdaptiveModel fit_adaptive(const MaskedDataset& data, const ExpansionMode& mode,
                           const ElasticNetSpec& spec);

struct FiniteAdaptiveParams {
  int max_depth = 4;
  Index min_leaf = 20;
  double min_gain = 1e-3;
};

// Internal nodes test m_feature: rows with m = 0 go to `observed`, rows with
// m = 1 go to `missing`.
struct PartitionNode {
  int feature = -1;
  int observed = -1;
  int missing = -1;
  int depth = 0;
  Index rows = 0;
  double sse = 0.0;
  LinearFit fit;  // Static model on the node's rows

  bool is_leaf() const { return feature < 0; }
};

struct PartitionTree {
  Index d = 0;
  std::vector<PartitionNode> nodes;  // nodes[0] is the root

  int leaf_for(const Eigen::Ref<const MaskVector>& m) const;
  double predict(const Eigen::Ref<const Vector>& x,
                 const Eigen::Ref<const MaskVector>& m) const;
  Vector predict(const MaskedDataset& data) const;
  int depth() const;
  std::vector<int> leaves() const;
};

struct PartitionSplit {
  int feature = -1;
  double sse = 0.0;  // summed in-sample squared error of the two children
};

// Best admissible split of `rows` (lowest feature wins ties), or feature -1
// when no split leaves both sides with at least min_leaf rows.
PartitionSplit best_partition_split(const MaskedDataset& data,
                                    const std::vector<Index>& rows,
                                    const ElasticNetSpec& spec, Index min_leaf);

PartitionTree fit_finite_adaptive(const MaskedDataset& data,
                                  const ElasticNetSpec& spec,
                                  const FiniteAdaptiveParams& params = {});

struct Imputation {
  Vector mu;
  std::vector<bool> valid;
};

// mu_j = b_j / w_j, invalid where |w_j| < 1e-8.
Imputation imputation_from_coefficients(const Vector& w, const Vector& b);
Imputation extract_imputation(const AdaptiveModel& model);

nlohmann::json to_json(const LinearFit& fit);
LinearFit linear_fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdaptiveModel& model);
AdaptiveModel adaptive_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PartitionTree& tree);
PartitionTree partition_tree_from_json(const nlohmann::json& j);

}  // namespace missfit
