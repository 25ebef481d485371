#include "missfit/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace missfit {

std::vector<Index> max_weight_assignment(const Matrix& score) {
  if (score.rows() != score.cols()) throw ContractError("assignment: score matrix must be square");
  const Index n = score.rows();
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based shortest augmenting path on cost = -score, 1-indexed.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> result(n, -1);
  for (Index j = 1; j <= n; ++j) result[p[j] - 1] = j - 1;
  return result;
}

std::vector<Index> greedy_assignment(const Matrix& score) {
  if (score.rows() != score.cols()) throw ContractError("assignment: score matrix must be square");
  const Index n = score.rows();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  const Vector best = score.rowwise().maxCoeff();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return best[a] > best[b]; });
  std::vector<char> taken(n, 0);
  std::vector<Index> result(n, -1);
  for (Index i : order) {
    Index pick = -1;
    for (Index j = 0; j < n; ++j) {
      if (taken[j]) continue;
      if (pick < 0 || score(i, j) > score(i, pick)) pick = j;
    }
    taken[pick] = 1;
    result[i] = pick;
  }
  return result;
}

double permutation_objective(const Matrix& x_full, const Mask& m,
                             const std::vector<Index>& sigma) {
  if (static_cast<Index>(sigma.size()) != x_full.rows()) {
    throw ContractError("permutation_objective: permutation length mismatch");
  }
  double total = 0.0;
  for (Index i = 0; i < x_full.rows(); ++i) {
    for (Index j = 0; j < x_full.cols(); ++j) {
      if (m(sigma[i], j)) total += x_full(i, j);
    }
  }
  return total;
}

Permutation adversarial_permute(const Matrix& x_full, const Mask& m) {
  if (x_full.rows() != m.rows() || x_full.cols() != m.cols()) {
    throw ContractError(fmt::format("adversarial_permute: x is {}x{}, mask is {}x{}", x_full.rows(),
                                    x_full.cols(), m.rows(), m.cols()));
  }
  const Index n = x_full.rows();
  const Matrix score = x_full * m.cast<double>().transpose();
  Permutation out;
  out.exact = n <= kExactAssignmentLimit;
  out.sigma = out.exact ? max_weight_assignment(score) : greedy_assignment(score);
  std::vector<Index> identity(n);
  std::iota(identity.begin(), identity.end(), Index{0});
  out.objective = permutation_objective(x_full, m, out.sigma);
  out.identity_objective = permutation_objective(x_full, m, identity);
  if (out.objective < out.identity_objective) {
    out.sigma = identity;
    out.objective = out.identity_objective;
  }
  return out;
}

}  // namespace missfit
