#pragma once

#include <random>

#include "missfit/core.hpp"

namespace testing_support {

using namespace missfit;

inline Matrix random_matrix(Index n, Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = normal(rng);
  return x;
}

inline Mask random_mask(Index n, Index d, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Mask m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = coin(rng) ? 1 : 0;
  return m;
}

// Masked dataset with a linear target plus noise.
inline MaskedDataset random_dataset(Index n, Index d, double p, std::uint64_t seed, double noise = 0.5) {
  std::mt19937_64 rng(seed);
  Matrix x = random_matrix(n, d, rng);
  Mask m = random_mask(n, d, p, rng);
  std::normal_distribution<double> normal;
  Vector w(d);
  for (Index j = 0; j < d; ++j) w[j] = normal(rng);
  Vector y = x * w;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) y[i] += m(i, j) ? 0.7 * (j + 1) : 0.0;
    y[i] += noise * normal(rng);
  }
  return make_dataset(x, m, y);
}

// Overwrites every entry of x at a missing position.
inline MaskedDataset scramble_missing(MaskedDataset data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> junk(-1e3, 1e3);
  for (Index i = 0; i < data.rows(); ++i)
    for (Index j = 0; j < data.cols(); ++j)
      if (data.m(i, j)) data.x(i, j) = junk(rng);
  return data;
}

// Minimum-norm least squares with intercept; fitted values are unique even
// when the design is rank deficient.
inline std::pair<double, Vector> ols(const Matrix& x, const Vector& y) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  const Vector beta = a.completeOrthogonalDecomposition().solve(y);
  return {beta[0], beta.tail(x.cols())};
}

inline double training_mse_ols(const Matrix& x, const Vector& y) {
  const auto [b, w] = ols(x, y);
  return ((y.array() - b) - (x * w).array()).square().mean();
}

}  // namespace testing_support
