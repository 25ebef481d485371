#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "missfit/core.hpp"
#include "missfit/elasticnet.hpp"
#include "missfit/learners.hpp"

namespace missfit {

// A regressor fitted on a fully numeric design. predict() must be row-wise:
// the prediction for a row may not depend on the other rows in the batch.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Vector predict(const Matrix& x) const = 0;
  virtual std::string label() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

struct RegressorContract {
  std::string label;  // linear | tree | forest
  std::function<std::unique_ptr<Predictor>(const Matrix&, const Vector&, std::uint64_t seed)> fit;
};

// lambda_ratio > 0 rescales lambda to lambda_ratio * lambda_max of each
// training design; otherwise spec.lambda is used as given.
RegressorContract linear_contract(ElasticNetSpec spec, double lambda_ratio = 0.0);
RegressorContract tree_contract(TreeParams params);
RegressorContract forest_contract(TreeParams params);

std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j);

enum class ErrorMetric { MeanSquared, OneMinusAuc };

double training_error(ErrorMetric metric, const Vector& y, const Vector& yhat);

// MeanSquared for continuous targets, OneMinusAuc for 0/1 targets.
ErrorMetric default_error_metric(const Vector& y);

// Entry (i,j) is x_ij when observed, mu_j when missing.
Matrix impute_with(const MaskedDataset& data, const Vector& mu);

struct JointLimits {
  int max_outer = 20;
  int max_cycles = 10;
  double min_rel_improve = 1e-4;

  void check() const;
};

enum class StopReason {
  MaxIterations,   // hit max_outer (or max_cycles for a coordinate phase)
  MinImprovement,  // relative improvement below min_rel_improve
  NoChange,        // a full sweep moved no coordinate
  RefitWorse,      // refitting the predictor would have increased the error
};

std::string to_string(StopReason r);

struct OuterIteration {
  double error_after_refit = 0.0;
  double error_after_search = 0.0;
  int cycles = 0;
  int moves = 0;
  StopReason search_stop = StopReason::MaxIterations;
};

struct JointModel {
  Vector mu;
  Vector sigma;
  std::string contract_label;
  std::shared_ptr<const Predictor> predictor;
  std::vector<double> error_trace;  // training error after each outer iteration
  std::vector<OuterIteration> iterations;
  StopReason stop_reason = StopReason::MaxIterations;
  int refits = 0;
  Index predictor_evaluations = 0;

  Vector predict(const MaskedDataset& data) const;
};

struct CoordinateStep {
  int epsilon = 0;
  double error = 0.0;
};

// Tries mu_j + eps * sigma_j for eps in {0, -1, +1} with the predictor held
// fixed; ties go to 0, then -1.
CoordinateStep coordinate_step(const Vector& mu, Index j, double sigma_j,
                               const Predictor& predictor,
                               const MaskedDataset& data, ErrorMetric metric);

JointModel joint_fit(const MaskedDataset& data, const RegressorContract& contract,
                     const JointLimits& limits, ErrorMetric metric,
                     std::uint64_t seed);

nlohmann::json to_json(const JointModel& model);
JointModel joint_model_from_json(const nlohmann::json& j);

}  // namespace missfit
