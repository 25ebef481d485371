#pragma once

#include <vector>

#include "missfit/core.hpp"

namespace missfit {

// Objective, with Z the design (standardized when `standardize` is set):
//   (1/2n) ||y - b - Z w||^2 + lambda * sum_j c_j (alpha |w_j| + (1-alpha)/2 w_j^2)
// With standardization the penalty sees w_j * sd_j, as glmnet does; the
// returned coefficients are always on the original scale.
struct ElasticNetSpec {
  double lambda = 0.0;
  double alpha = 1.0;
  std::vector<double> penalty_weights;  // empty = all ones
  bool fit_intercept = true;
  bool standardize = true;
  int max_iters = 10'000;
  double tol = 1e-7;

  void check(Index p) const;
};

struct LinearFit {
  double intercept = 0.0;
  Vector coefficients;
  std::vector<double> objective_trace;  // one entry per full sweep
  int iterations = 0;
  bool converged = true;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Vector predict(const Matrix& x) const;
};

double soft_threshold(double z, double gamma);

LinearFit fit_elastic_net(const Matrix& x, const Vector& y,
                          const ElasticNetSpec& spec);

// Smallest lambda for which every coefficient is zero under unit penalty
// weights (alpha is floored at 1e-3 so ridge-only specs get a finite value).
double lambda_max(const Matrix& x, const Vector& y, const ElasticNetSpec& spec);

// Geometric grid from lambda_max down to lambda_max * 1e-3. A constant target
// yields the single value {0}.
std::vector<double> lambda_grid(const Matrix& x, const Vector& y,
                                const ElasticNetSpec& spec, int n_lambdas);

// c_j = n / #{i : x_ij != 0}, clamped to [1, 100]. Columns that are rarely
// non-zero have fewer effective samples and are penalized harder.
std::vector<double> support_penalty_weights(const Matrix& x);

// Objective evaluated on the original data for a given fit, in the same space
// the solver uses (standardized or not).
double elastic_net_objective(const Matrix& x, const Vector& y,
                             const LinearFit& fit, const ElasticNetSpec& spec);

}  // namespace missfit
