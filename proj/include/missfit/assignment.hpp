#pragma once

#include <vector>

#include "missfit/core.hpp"

namespace missfit {

// Maximum-weight perfect matching on a square score matrix (Hungarian
// method, O(n^3)). result[i] is the column assigned to row i.
std::vector<Index> max_weight_assignment(const Matrix& score);

// Rows in descending order of their best score each take their best
// still-free column.
std::vector<Index> greedy_assignment(const Matrix& score);

struct Permutation {
  std::vector<Index> sigma;  // row i receives mask row sigma[i]
  double objective = 0.0;
  double identity_objective = 0.0;
  bool exact = true;
};

inline constexpr Index kExactAssignmentLimit = 2000;

// sum_i <x_full_i, m_{sigma_i}>
double permutation_objective(const Matrix& x_full, const Mask& m,
                             const std::vector<Index>& sigma);

// Maximizes permutation_objective; exact up to kExactAssignmentLimit rows,
// greedy above.
Permutation adversarial_permute(const Matrix& x_full, const Mask& m);

}  // namespace missfit
