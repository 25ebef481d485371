#include "missfit/elasticnet.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace missfit {
namespace {

// Centered (and optionally scaled) view of the design restricted to columns
// that carry signal; everything the coordinate sweeps need.
struct Prepared {
  Index n = 0;
  std::vector<Index> active;
  Vector x_mean;   // per original column
  Vector x_scale;  // per original column, 1 when not standardizing
  double y_mean = 0.0;
  Matrix gram;     // Z^T Z / n over active columns
  Vector xty;      // Z^T (y - y_mean) / n
  double yy = 0.0; // ||y - y_mean||^2 / n
};

void check_finite(const Matrix& x, const Vector& y) {
  if (!x.allFinite()) throw DataError("elastic net: non-finite value in design matrix");
  if (!y.allFinite()) throw DataError("elastic net: non-finite value in target");
}

Prepared prepare(const Matrix& x, const Vector& y, const ElasticNetSpec& spec) {
  Prepared pr;
  pr.n = x.rows();
  const Index p = x.cols();
  const auto nd = static_cast<double>(pr.n);
  pr.x_mean = spec.fit_intercept ? Vector(x.colwise().mean().transpose())
                                 : Vector::Zero(p);
  pr.x_scale = Vector::Ones(p);
  pr.y_mean = spec.fit_intercept ? y.mean() : 0.0;

  for (Index j = 0; j < p; ++j) {
    const double raw_ss = x.col(j).squaredNorm();
    const double ss = (x.col(j).array() - pr.x_mean[j]).square().sum();
    if (raw_ss == 0.0 || ss <= 1e-12 * raw_ss) continue;
    if (spec.standardize) pr.x_scale[j] = std::sqrt(ss / nd);
    pr.active.push_back(j);
  }

  const auto pa = static_cast<Index>(pr.active.size());
  Matrix z(pr.n, pa);
  for (Index a = 0; a < pa; ++a) {
    const Index j = pr.active[a];
    z.col(a) = (x.col(j).array() - pr.x_mean[j]) / pr.x_scale[j];
  }
  const Vector yc = y.array() - pr.y_mean;
  pr.gram = (z.transpose() * z) / nd;
  pr.xty = (z.transpose() * yc) / nd;
  pr.yy = yc.squaredNorm() / nd;
  return pr;
}

double weight_of(const ElasticNetSpec& spec, Index j) {
  return spec.penalty_weights.empty() ? 1.0 : spec.penalty_weights[j];
}

}  // namespace

void ElasticNetSpec::check(Index p) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ContractError(fmt::format("elastic net: lambda must be >= 0, got {}", lambda));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError(fmt::format("elastic net: alpha must be in [0,1], got {}", alpha));
  }
  if (!penalty_weights.empty()) {
    if (static_cast<Index>(penalty_weights.size()) != p) {
      throw ContractError(fmt::format("elastic net: {} penalty weights for {} columns",
                                      penalty_weights.size(), p));
    }
    for (double c : penalty_weights) {
      if (!std::isfinite(c) || c < 0.0) {
        throw ContractError("elastic net: penalty weights must be finite and >= 0");
      }
    }
  }
  if (max_iters <= 0) throw ContractError("elastic net: max_iters must be positive");
  if (!(tol > 0.0)) throw ContractError("elastic net: tol must be positive");
}

double LinearFit::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double acc = intercept;
  for (Index j = 0; j < coefficients.size(); ++j) acc += coefficients[j] * row[j];
  return acc;
}

Vector LinearFit::predict(const Matrix& x) const {
  if (x.cols() != coefficients.size()) {
    throw ContractError(fmt::format("linear predict: {} columns, model has {}",
                                    x.cols(), coefficients.size()));
  }
  Vector out(x.rows());
  // Row-by-row in fixed order so a row's prediction does not depend on which
  // other rows are in the batch.
  for (Index i = 0; i < x.rows(); ++i) {
    double acc = intercept;
    for (Index j = 0; j < x.cols(); ++j) acc += coefficients[j] * x(i, j);
    out[i] = acc;
  }
  return out;
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

LinearFit fit_elastic_net(const Matrix& x, const Vector& y,
                          const ElasticNetSpec& spec) {
  if (x.rows() != y.size()) {
    throw ContractError(fmt::format("elastic net: {} rows but {} targets", x.rows(), y.size()));
  }
  if (x.rows() < 1) throw ContractError("elastic net: need at least one row");
  spec.check(x.cols());
  check_finite(x, y);

  const Prepared pr = prepare(x, y, spec);
  const auto pa = static_cast<Index>(pr.active.size());

  Vector l1(pa);
  Vector l2(pa);
  for (Index a = 0; a < pa; ++a) {
    const double c = weight_of(spec, pr.active[a]);
    l1[a] = spec.lambda * c * spec.alpha;
    l2[a] = spec.lambda * c * (1.0 - spec.alpha);
  }

  Vector beta = Vector::Zero(pa);
  Vector gb = Vector::Zero(pa);  // gram * beta
  LinearFit fit;
  fit.converged = (pa == 0);

  auto objective = [&]() {
    double pen = 0.0;
    for (Index a = 0; a < pa; ++a) {
      pen += l1[a] * std::abs(beta[a]) + 0.5 * l2[a] * beta[a] * beta[a];
    }
    return 0.5 * pr.yy - pr.xty.dot(beta) + 0.5 * beta.dot(gb) + pen;
  };

  for (int it = 0; it < spec.max_iters && pa > 0; ++it) {
    double max_change = 0.0;
    for (Index a = 0; a < pa; ++a) {
      const double gaa = pr.gram(a, a);
      const double old = beta[a];
      const double z = pr.xty[a] - gb[a] + gaa * old;
      const double updated = soft_threshold(z, l1[a]) / (gaa + l2[a]);
      const double delta = updated - old;
      if (delta != 0.0) {
        beta[a] = updated;
        gb.noalias() += delta * pr.gram.col(a);
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(gaa));
      }
    }
    gb.noalias() = pr.gram * beta;  // drop accumulated rounding
    fit.objective_trace.push_back(objective());
    fit.iterations = it + 1;
    if (max_change < spec.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.coefficients = Vector::Zero(x.cols());
  double shift = 0.0;
  for (Index a = 0; a < pa; ++a) {
    const Index j = pr.active[a];
    fit.coefficients[j] = beta[a] / pr.x_scale[j];
    shift += pr.x_mean[j] * fit.coefficients[j];
  }
  fit.intercept = spec.fit_intercept ? pr.y_mean - shift : 0.0;
  return fit;
}

double lambda_max(const Matrix& x, const Vector& y, const ElasticNetSpec& spec) {
  if (x.rows() != y.size()) throw ContractError("lambda_max: row mismatch");
  check_finite(x, y);
  ElasticNetSpec unit = spec;
  unit.penalty_weights.clear();
  const Prepared pr = prepare(x, y, unit);
  if (pr.active.empty() || pr.yy == 0.0) return 0.0;
  return pr.xty.cwiseAbs().maxCoeff() / std::max(spec.alpha, 1e-3);
}

std::vector<double> lambda_grid(const Matrix& x, const Vector& y,
                                const ElasticNetSpec& spec, int n_lambdas) {
  if (n_lambdas < 2) throw ContractError("lambda_grid: need at least 2 values");
  const double top = lambda_max(x, y, spec);
  if (top <= 0.0) return {0.0};
  std::vector<double> grid(static_cast<std::size_t>(n_lambdas));
  const double log_ratio = std::log(1e-3);
  for (int k = 0; k < n_lambdas; ++k) {
    grid[k] = top * std::exp(log_ratio * k / (n_lambdas - 1));
  }
  grid.front() = top;
  grid.back() = top * 1e-3;
  return grid;
}

std::vector<double> support_penalty_weights(const Matrix& x) {
  std::vector<double> w(static_cast<std::size_t>(x.cols()));
  const auto n = static_cast<double>(x.rows());
  for (Index j = 0; j < x.cols(); ++j) {
    const auto nnz = static_cast<double>((x.col(j).array() != 0.0).count());
    w[j] = nnz == 0.0 ? 100.0 : std::clamp(n / nnz, 1.0, 100.0);
  }
  return w;
}

double elastic_net_objective(const Matrix& x, const Vector& y,
                             const LinearFit& fit, const ElasticNetSpec& spec) {
  const Prepared pr = prepare(x, y, spec);
  const Vector r = y - fit.predict(x);
  double pen = 0.0;
  for (Index j = 0; j < x.cols(); ++j) {
    const double w = fit.coefficients[j] * pr.x_scale[j];
    const double c = weight_of(spec, j);
    pen += spec.lambda * c *
           (spec.alpha * std::abs(w) + 0.5 * (1.0 - spec.alpha) * w * w);
  }
  return r.squaredNorm() / (2.0 * static_cast<double>(x.rows())) + pen;
}

}  // namespace missfit
