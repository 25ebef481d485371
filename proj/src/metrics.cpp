#include "missfit/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

namespace missfit {
namespace {

void check_lengths(const Vector& y, const Vector& yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw ContractError(fmt::format("{}: {} targets but {} predictions", what, y.size(), yhat.size()));
  }
}

}  // namespace

double mean_squared_error(const Vector& y, const Vector& yhat) {
  check_lengths(y, yhat, "mse");
  if (y.size() == 0) throw ContractError("mse: empty input");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

double r_squared(const Vector& y, const Vector& yhat) {
  check_lengths(y, yhat, "r_squared");
  if (y.size() < 2) throw ContractError("r_squared: need at least 2 observations");
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot <= 0.0) throw DataError("r_squared: target has zero variance");
  return 1.0 - (y - yhat).squaredNorm() / ss_tot;
}

double auc(const Vector& y, const Vector& scores) {
  check_lengths(y, scores, "auc");
  const Index n = y.size();
  Index n_pos = 0;
  for (Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("auc: target must be 0/1");
    n_pos += y[i] == 1.0 ? 1 : 0;
  }
  const Index n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: both classes must be present");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  Index i = 0;
  while (i < n) {
    Index k = i;
    while (k + 1 < n && scores[order[k + 1]] == scores[order[i]]) ++k;
    const double midrank = 0.5 * static_cast<double>(i + k) + 1.0;
    for (Index t = i; t <= k; ++t) {
      if (y[order[t]] == 1.0) rank_sum_pos += midrank;
    }
    i = k + 1;
  }
  const auto np = static_cast<double>(n_pos);
  const auto nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double scaled_auc(const Vector& y, const Vector& scores) {
  return 2.0 * auc(y, scores) - 1.0;
}

double predictive_score(const Vector& y, const Vector& yhat) {
  return is_binary_target(y) ? scaled_auc(y, yhat) : r_squared(y, yhat);
}

}  // namespace missfit
