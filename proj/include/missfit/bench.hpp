#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "missfit/adaptive.hpp"
#include "missfit/core.hpp"
#include "missfit/datagen.hpp"
#include "missfit/joint.hpp"

namespace missfit {

// Training or evaluation data. x_full is the fully observed design when the
// generator knows it (empty otherwise); only the oracle reads it.
struct Instance {
  MaskedDataset data;
  Matrix x_full;

  bool has_full() const { return x_full.size() > 0; }
};

Instance subset_instance(const Instance& inst, const std::vector<Index>& rows);

struct HyperParams {
  double lambda_ratio = 0.0;  // lambda = lambda_ratio * lambda_max of the training design
  double alpha = 1.0;
  int max_depth = 6;
  Index min_leaf = 5;
  int n_trees = 100;
  std::string variant;  // for *-best methods: the concrete method this point fits

  std::string describe() const;
};

class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual Vector predict(const Instance& inst) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

std::unique_ptr<FittedModel> load_model(const nlohmann::json& j);

// Called with the row ids of every training set a method is fitted on.
using FitAudit = std::function<void(const std::string& method, const std::vector<Index>& row_ids)>;

struct MethodOptions {
  JointLimits joint;
  FiniteAdaptiveParams finite;
  int n_threads = 1;
  FitAudit audit;
};

// Grids per learner family ("linear", "tree", "forest"); missing entries use
// the defaults.
using GridTable = std::map<std::string, std::vector<HyperParams>>;

const std::vector<std::string>& method_names();
bool is_method(const std::string& name);
std::string family_of(const std::string& method);
GridTable default_grids();
// A *-best method's grid is the union of its candidates' grids, each tagged
// with the candidate name in `variant`.
std::vector<HyperParams> method_grid(const std::string& method, const GridTable& grids);

std::unique_ptr<FittedModel> fit_method(const std::string& method, const Instance& train,
                                        const HyperParams& hp, const MethodOptions& opts,
                                        std::uint64_t seed);

enum class Metric { Auto, R2, ScaledAuc, Mse };
std::string to_string(Metric m);
Metric parse_metric(const std::string& s);
// Auto resolves to R2 or ScaledAuc depending on the target.
Metric resolve_metric(Metric m, const Vector& y);
double evaluate_metric(Metric m, const Vector& y, const Vector& yhat);

struct CvResult {
  std::size_t best_index = 0;
  HyperParams best;
  double score = 0.0;
  std::vector<double> scores;  // per grid point; -inf where every fold failed
};

// Fold k holds shuffled positions k, k + folds, ...
std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed);

// Mean validation score per grid point; when some fold is too small to score
// on its own (e.g. leave-one-out) the out-of-fold predictions are pooled.
// Ties go to the earliest grid point.
CvResult kfold_cv(const Instance& train, const std::string& method,
                  const std::vector<HyperParams>& grid, int folds, std::uint64_t seed,
                  const MethodOptions& opts, Metric metric = Metric::Auto);

struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<GeneratorSpec> generator;
  std::string data_path;
  std::string target = "y";
  std::vector<std::string> methods;
  int replications = 10;
  double test_fraction = 0.3;
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<Metric> metrics{Metric::Auto};
  GridTable grids = default_grids();
  JointLimits joint;
  FiniteAdaptiveParams finite;

  void check() const;
  std::string setting() const;
};

struct ResultRecord {
  std::string dataset;
  std::string method;
  std::string setting;
  int replication = 0;
  std::string metric;
  std::optional<double> value;    // empty when the method failed
  std::optional<double> seconds;  // empty unless timing was requested
  std::string note;               // failure reason, not serialized
};

struct ResultsTable {
  std::vector<ResultRecord> records;

  void canonicalize();
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  // Skips malformed lines (a run killed mid-write leaves at most one).
  static ResultsTable read_csv(const std::string& path);
};

inline constexpr const char* kResultsHeader = "dataset,method,setting,replication,metric,value,seconds";
std::string format_record(const ResultRecord& r);

struct RunOptions {
  int jobs = 1;
  bool record_time = false;
  std::string output_path;  // records are appended here as tasks finish
  bool resume = false;
  FitAudit audit;
  std::function<void(const std::string&)> log;
};

// One replication: the held-out split and the data its methods train on.
struct Replication {
  Instance train;
  Instance test;
  std::string setting;
};

Replication make_replication(const ExperimentConfig& config, int replication,
                             const MaskedDataset* loaded = nullptr);

ResultsTable run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SummaryRow {
  std::string dataset;
  std::string method;
  std::string setting;
  std::string metric;
  int count = 0;
  int failures = 0;
  double mean = 0.0;
  std::optional<double> std_error;  // sample sd / sqrt(count), needs count >= 2
};

SummaryRow summarize_values(const std::vector<double>& values);
std::vector<SummaryRow> summarize(const ResultsTable& table);

// Replications where `a` scores strictly above `b` on `metric`.
struct WinCount {
  int wins = 0;
  int compared = 0;
};
WinCount count_wins(const ResultsTable& table, const std::string& a, const std::string& b,
                    const std::string& metric);

}  // namespace missfit
