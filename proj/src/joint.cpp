#include "missfit/joint.hpp"

#include <cmath>

#include <fmt/format.h>

#include "missfit/adaptive.hpp"
#include "missfit/metrics.hpp"

namespace missfit {
namespace {

class LinearPredictor final : public Predictor {
 public:
  explicit LinearPredictor(LinearFit fit) : fit_(std::move(fit)) {}
  Vector predict(const Matrix& x) const override { return fit_.predict(x); }
  std::string label() const override { return "linear"; }
  nlohmann::json to_json() const override {
    return {{"kind", "linear"}, {"fit", missfit::to_json(fit_)}};
  }

 private:
  LinearFit fit_;
};

class TreePredictor final : public Predictor {
 public:
  explicit TreePredictor(MiaTree tree) : tree_(std::move(tree)) {}
  Vector predict(const Matrix& x) const override { return tree_.predict(x); }
  std::string label() const override { return "tree"; }
  nlohmann::json to_json() const override { return missfit::to_json(tree_); }

 private:
  MiaTree tree_;
};

class ForestPredictor final : public Predictor {
 public:
  explicit ForestPredictor(Forest forest) : forest_(std::move(forest)) {}
  Vector predict(const Matrix& x) const override { return forest_.predict(x); }
  std::string label() const override { return "forest"; }
  nlohmann::json to_json() const override { return missfit::to_json(forest_); }

 private:
  Forest forest_;
};

MaskedDataset complete_dataset(const Matrix& x, const Vector& y) {
  return make_dataset(x, Mask::Zero(x.rows(), x.cols()), y);
}

// Incremental evaluation state: predictions for the current imputation are
// cached and a candidate only re-predicts the rows where feature j is
// missing. Predictors are row-wise, so this matches a full re-evaluation.
struct SearchState {
  const MaskedDataset& data;
  ErrorMetric metric;
  std::vector<std::vector<Index>> missing_rows;
  Matrix x_mu;
  Vector pred;
  double error = 0.0;
  Index evaluations = 0;

  SearchState(const MaskedDataset& d, ErrorMetric m, const Vector& mu)
      : data(d), metric(m), x_mu(impute_with(d, mu)) {
    missing_rows.resize(static_cast<std::size_t>(d.cols()));
    for (Index i = 0; i < d.rows(); ++i) {
      for (Index j = 0; j < d.cols(); ++j) {
        if (d.missing(i, j)) missing_rows[j].push_back(i);
      }
    }
  }

  double evaluate_all(const Predictor& f) {
    pred = f.predict(x_mu);
    ++evaluations;
    error = training_error(metric, data.y, pred);
    return error;
  }

  // Error and sub-predictions with mu_j set to `value`.
  double candidate(const Predictor& f, Index j, double value, Vector* sub_pred) {
    const auto& rows = missing_rows[j];
    Matrix sub(static_cast<Index>(rows.size()), x_mu.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Index>(r)) = x_mu.row(rows[r]);
    sub.col(j).setConstant(value);
    *sub_pred = f.predict(sub);
    ++evaluations;
    Vector trial = pred;
    for (std::size_t r = 0; r < rows.size(); ++r) trial[rows[r]] = (*sub_pred)[static_cast<Index>(r)];
    return training_error(metric, data.y, trial);
  }

  void accept(Index j, double value, const Vector& sub_pred, double new_error) {
    const auto& rows = missing_rows[j];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x_mu(rows[r], j) = value;
      pred[rows[r]] = sub_pred[static_cast<Index>(r)];
    }
    error = new_error;
  }
};

double relative_gain(double before, double after) {
  if (before <= 0.0) return 0.0;
  return (before - after) / before;
}

}  // namespace

RegressorContract linear_contract(ElasticNetSpec spec, double lambda_ratio) {
  return {"linear", [spec, lambda_ratio](const Matrix& x, const Vector& y, std::uint64_t) {
            ElasticNetSpec s = spec;
            if (lambda_ratio > 0.0) s.lambda = lambda_ratio * lambda_max(x, y, s);
            return std::unique_ptr<Predictor>(
                std::make_unique<LinearPredictor>(fit_elastic_net(x, y, s)));
          }};
}

RegressorContract tree_contract(TreeParams params) {
  return {"tree", [params](const Matrix& x, const Vector& y, std::uint64_t) {
            return std::unique_ptr<Predictor>(
                std::make_unique<TreePredictor>(fit_cart_mia(complete_dataset(x, y), params)));
          }};
}

RegressorContract forest_contract(TreeParams params) {
  return {"forest", [params](const Matrix& x, const Vector& y, std::uint64_t seed) {
            TreeParams p = params;
            p.seed = derive_seed(params.seed, seed);
            return std::unique_ptr<Predictor>(
                std::make_unique<ForestPredictor>(fit_forest(complete_dataset(x, y), p)));
          }};
}

std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear") return std::make_unique<LinearPredictor>(linear_fit_from_json(j.at("fit")));
  if (kind == "mia-tree") return std::make_unique<TreePredictor>(mia_tree_from_json(j));
  if (kind == "forest") return std::make_unique<ForestPredictor>(forest_from_json(j));
  throw ContractError(fmt::format("unknown predictor kind '{}'", kind));
}

double training_error(ErrorMetric metric, const Vector& y, const Vector& yhat) {
  return metric == ErrorMetric::MeanSquared ? mean_squared_error(y, yhat)
                                            : 1.0 - auc(y, yhat);
}

ErrorMetric default_error_metric(const Vector& y) {
  return is_binary_target(y) ? ErrorMetric::OneMinusAuc : ErrorMetric::MeanSquared;
}

Matrix impute_with(const MaskedDataset& data, const Vector& mu) {
  if (mu.size() != data.cols()) {
    throw ContractError(fmt::format("impute_with: mu has {} entries, data has {} columns",
                                    mu.size(), data.cols()));
  }
  if (!mu.allFinite()) throw ContractError("impute_with: mu must be finite");
  Matrix out = data.x;
  for (Index j = 0; j < data.cols(); ++j) {
    for (Index i = 0; i < data.rows(); ++i) {
      if (data.missing(i, j)) out(i, j) = mu[j];
    }
  }
  return out;
}

void JointLimits::check() const {
  if (max_outer < 1 || max_cycles < 1 || !(min_rel_improve > 0.0)) {
    throw ContractError("joint limits must be positive");
  }
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIterations: return "max-iterations";
    case StopReason::MinImprovement: return "min-improvement";
    case StopReason::NoChange: return "no-change";
    case StopReason::RefitWorse: return "refit-worse";
  }
  return "unknown";
}

Vector JointModel::predict(const MaskedDataset& data) const {
  return predictor->predict(impute_with(data, mu));
}

CoordinateStep coordinate_step(const Vector& mu, Index j, double sigma_j,
                               const Predictor& predictor,
                               const MaskedDataset& data, ErrorMetric metric) {
  if (j < 0 || j >= data.cols()) throw ContractError("coordinate_step: feature out of range");
  if (!(sigma_j >= 0.0)) throw ContractError("coordinate_step: sigma must be >= 0");
  CoordinateStep best;
  for (int eps : {0, -1, 1}) {
    Vector trial = mu;
    trial[j] += eps * sigma_j;
    const double err = training_error(metric, data.y, predictor.predict(impute_with(data, trial)));
    if (eps == 0 || err < best.error) best = {eps, err};
  }
  return best;
}

JointModel joint_fit(const MaskedDataset& data, const RegressorContract& contract,
                     const JointLimits& limits, ErrorMetric metric,
                     std::uint64_t seed) {
  validate(data);
  limits.check();
  if (data.rows() < 2) throw ContractError("joint_fit: need at least 2 rows");
  const Index n = data.rows();
  const Index d = data.cols();

  JointModel model;
  model.contract_label = contract.label;
  model.mu = Vector::Zero(d);
  model.sigma = Vector::Ones(d);
  for (Index j = 0; j < d; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i) {
      if (!data.missing(i, j)) {
        sum += data.x(i, j);
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (!data.missing(i, j)) ss += (data.x(i, j) - mean) * (data.x(i, j) - mean);
    }
    const double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
    model.mu[j] = mean;
    model.sigma[j] = sd / std::sqrt(static_cast<double>(n));
  }

  SearchState state(data, metric, model.mu);
  std::shared_ptr<const Predictor> f = contract.fit(state.x_mu, data.y, seed);
  model.refits = 1;
  state.evaluate_all(*f);

  model.stop_reason = StopReason::MaxIterations;
  for (int outer = 0; outer < limits.max_outer; ++outer) {
    OuterIteration log;
    if (outer > 0) {
      std::shared_ptr<const Predictor> refit = contract.fit(state.x_mu, data.y, seed);
      ++model.refits;
      const Vector kept_pred = state.pred;
      const double kept_error = state.error;
      state.evaluate_all(*refit);
      if (state.error > kept_error) {
        state.pred = kept_pred;
        state.error = kept_error;
        model.stop_reason = StopReason::RefitWorse;
        break;
      }
      f = std::move(refit);
    }
    log.error_after_refit = state.error;

    log.search_stop = StopReason::MaxIterations;
    for (int cycle = 0; cycle < limits.max_cycles; ++cycle) {
      const double cycle_start = state.error;
      int moved = 0;
      for (Index j = 0; j < d; ++j) {
        const double s = model.sigma[j];
        if (s == 0.0 || state.missing_rows[j].empty()) continue;
        Vector down_pred;
        Vector up_pred;
        const double down = state.candidate(*f, j, model.mu[j] - s, &down_pred);
        const double up = state.candidate(*f, j, model.mu[j] + s, &up_pred);
        int eps = 0;
        double best = state.error;
        if (down < best) {
          eps = -1;
          best = down;
        }
        if (up < best) {
          eps = 1;
          best = up;
        }
        if (eps == 0) continue;
        model.mu[j] += eps * s;
        state.accept(j, model.mu[j], eps < 0 ? down_pred : up_pred, best);
        ++moved;
      }
      ++log.cycles;
      log.moves += moved;
      if (moved == 0) {
        log.search_stop = StopReason::NoChange;
        break;
      }
      if (relative_gain(cycle_start, state.error) < limits.min_rel_improve) {
        log.search_stop = StopReason::MinImprovement;
        break;
      }
    }
    log.error_after_search = state.error;
    model.iterations.push_back(log);
    model.error_trace.push_back(state.error);

    if (log.moves == 0) {
      model.stop_reason = StopReason::NoChange;
      break;
    }
    const auto k = model.error_trace.size();
    if (k >= 2 && relative_gain(model.error_trace[k - 2], model.error_trace[k - 1]) <
                      limits.min_rel_improve) {
      model.stop_reason = StopReason::MinImprovement;
      break;
    }
  }

  model.predictor = std::move(f);
  model.predictor_evaluations = state.evaluations;
  return model;
}

nlohmann::json to_json(const JointModel& model) {
  std::vector<std::string> stops;
  for (const auto& it : model.iterations) stops.push_back(to_string(it.search_stop));
  return {{"kind", "joint"},
          {"contract", model.contract_label},
          {"mu", std::vector<double>(model.mu.begin(), model.mu.end())},
          {"sigma", std::vector<double>(model.sigma.begin(), model.sigma.end())},
          {"error_trace", model.error_trace},
          {"search_stops", stops},
          {"stop_reason", to_string(model.stop_reason)},
          {"refits", model.refits},
          {"predictor", model.predictor->to_json()}};
}

JointModel joint_model_from_json(const nlohmann::json& j) {
  JointModel model;
  model.contract_label = j.at("contract").get<std::string>();
  const auto mu = j.at("mu").get<std::vector<double>>();
  const auto sigma = j.at("sigma").get<std::vector<double>>();
  model.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Index>(mu.size()));
  model.sigma = Eigen::Map<const Vector>(sigma.data(), static_cast<Index>(sigma.size()));
  model.error_trace = j.value("error_trace", std::vector<double>{});
  model.refits = j.value("refits", 0);
  const auto stop = j.value("stop_reason", std::string("max-iterations"));
  for (auto r : {StopReason::MaxIterations, StopReason::MinImprovement, StopReason::NoChange,
                 StopReason::RefitWorse}) {
    if (to_string(r) == stop) model.stop_reason = r;
  }
  model.predictor = predictor_from_json(j.at("predictor"));
  return model;
}

}  // namespace missfit
