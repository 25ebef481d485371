#include "missfit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "missfit/csv_io.hpp"
#include "missfit/learners.hpp"
#include "missfit/metrics.hpp"

namespace missfit {
namespace {

enum SeedStream : std::uint64_t { kData = 1, kSplit = 2, kFolds = 3, kFit = 4 };

Task task_for(const Vector& y) {
  return is_binary_target(y) ? Task::Classification : Task::Regression;
}

ElasticNetSpec linear_spec(const HyperParams& hp) {
  ElasticNetSpec spec;
  spec.alpha = hp.alpha;
  return spec;
}

LinearFit fit_linear_ratio(const Matrix& x, const Vector& y, const HyperParams& hp) {
  ElasticNetSpec spec = linear_spec(hp);
  if (hp.lambda_ratio > 0.0) spec.lambda = hp.lambda_ratio * lambda_max(x, y, spec);
  return fit_elastic_net(x, y, spec);
}

TreeParams tree_params(const HyperParams& hp, const Vector& y, std::uint64_t seed, int n_threads) {
  TreeParams p;
  p.max_depth = hp.max_depth;
  p.min_leaf = hp.min_leaf;
  p.n_trees = hp.n_trees;
  p.seed = seed;
  p.n_threads = n_threads;
  p.task = task_for(y);
  return p;
}

std::vector<double> to_vec(const Vector& v) { return {v.begin(), v.end()}; }

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

class AdaptiveFitted final : public FittedModel {
 public:
  explicit AdaptiveFitted(AdaptiveModel m) : m_(std::move(m)) {}
  Vector predict(const Instance& inst) const override { return m_.predict(inst.data); }
  nlohmann::json to_json() const override { return missfit::to_json(m_); }

 private:
  AdaptiveModel m_;
};

class FiniteFitted final : public FittedModel {
 public:
  explicit FiniteFitted(PartitionTree t) : t_(std::move(t)) {}
  Vector predict(const Instance& inst) const override { return t_.predict(inst.data); }
  nlohmann::json to_json() const override { return missfit::to_json(t_); }

 private:
  PartitionTree t_;
};

class JointFitted final : public FittedModel {
 public:
  explicit JointFitted(JointModel m) : m_(std::move(m)) {}
  Vector predict(const Instance& inst) const override { return m_.predict(inst.data); }
  nlohmann::json to_json() const override { return missfit::to_json(m_); }

 private:
  JointModel m_;
};

class MeanImputeFitted final : public FittedModel {
 public:
  MeanImputeFitted(Vector mu, std::shared_ptr<const Predictor> f) : mu_(std::move(mu)), f_(std::move(f)) {}
  Vector predict(const Instance& inst) const override {
    return f_->predict(impute_with(inst.data, mu_));
  }
  nlohmann::json to_json() const override {
    return {{"kind", "mean-impute"}, {"mu", to_vec(mu_)}, {"predictor", f_->to_json()}};
  }

 private:
  Vector mu_;
  std::shared_ptr<const Predictor> f_;
};

class TreeFitted final : public FittedModel {
 public:
  explicit TreeFitted(MiaTree t) : t_(std::move(t)) {}
  Vector predict(const Instance& inst) const override { return t_.predict(inst.data); }
  nlohmann::json to_json() const override { return missfit::to_json(t_); }

 private:
  MiaTree t_;
};

class ForestFitted final : public FittedModel {
 public:
  explicit ForestFitted(Forest f) : f_(std::move(f)) {}
  Vector predict(const Instance& inst) const override { return f_.predict(inst.data); }
  nlohmann::json to_json() const override { return missfit::to_json(f_); }

 private:
  Forest f_;
};

Matrix masked_columns(const MaskedDataset& data, const std::vector<Index>& cols) {
  Matrix z(data.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (Index i = 0; i < data.rows(); ++i) {
      z(i, static_cast<Index>(c)) = data.missing(i, cols[c]) ? 0.0 : data.x(i, cols[c]);
    }
  }
  return z;
}

// Linear model on the columns that were never missing in training.
class CompleteFeaturesFitted final : public FittedModel {
 public:
  CompleteFeaturesFitted(Index d, std::vector<Index> cols, LinearFit fit)
      : d_(d), cols_(std::move(cols)), fit_(std::move(fit)) {}
  Vector predict(const Instance& inst) const override {
    if (inst.data.cols() != d_) throw ContractError("complete-features: column count mismatch");
    return fit_.predict(masked_columns(inst.data, cols_));
  }
  nlohmann::json to_json() const override {
    return {{"kind", "complete-features"}, {"d", d_}, {"columns", cols_}, {"fit", missfit::to_json(fit_)}};
  }

 private:
  Index d_;
  std::vector<Index> cols_;
  LinearFit fit_;
};

Matrix oracle_design(const Instance& inst) {
  if (!inst.has_full()) throw DataError("oracle: the fully observed design is not available");
  const Index d = inst.data.cols();
  Matrix z(inst.data.rows(), 2 * d);
  z.leftCols(d) = inst.x_full;
  z.rightCols(d) = inst.data.m.cast<double>();
  return z;
}

class OracleFitted final : public FittedModel {
 public:
  explicit OracleFitted(LinearFit fit) : fit_(std::move(fit)) {}
  Vector predict(const Instance& inst) const override { return fit_.predict(oracle_design(inst)); }
  nlohmann::json to_json() const override { return {{"kind", "oracle"}, {"fit", missfit::to_json(fit_)}}; }

 private:
  LinearFit fit_;
};

std::unique_ptr<FittedModel> fit_adaptive_method(const ExpansionMode& mode, const MaskedDataset& data,
                                                 const HyperParams& hp) {
  ElasticNetSpec spec = linear_spec(hp);
  if (mode.kind == ExpansionKind::FullyAdaptive) {
    if (hp.lambda_ratio > 0.0) {
      spec.lambda = hp.lambda_ratio * lambda_max(expand_dataset(data, ExpansionMode::static_mode()), data.y, spec);
    }
    return std::make_unique<AdaptiveFitted>(fit_adaptive(data, mode, spec));
  }
  const Matrix z = expand_dataset(data, mode);
  spec.penalty_weights = support_penalty_weights(z);
  if (hp.lambda_ratio > 0.0) spec.lambda = hp.lambda_ratio * lambda_max(z, data.y, spec);
  return std::make_unique<AdaptiveFitted>(fit_adaptive(data, mode, spec));
}

RegressorContract contract_for(const std::string& learner, const HyperParams& hp, const Vector& y,
                               std::uint64_t seed, int n_threads) {
  if (learner == "linear") return linear_contract(linear_spec(hp), hp.lambda_ratio);
  if (learner == "tree") return tree_contract(tree_params(hp, y, seed, n_threads));
  if (learner == "forest") return forest_contract(tree_params(hp, y, seed, n_threads));
  throw ContractError(fmt::format("unknown learner '{}'", learner));
}

const std::map<std::string, std::vector<std::string>>& best_candidates() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"adaptive-best",
       {"adaptive-static", "adaptive-affine-intercept", "adaptive-affine", "adaptive-poly2",
        "adaptive-fully", "adaptive-finite"}},
      {"joint-best", {"joint-linear", "joint-tree", "joint-forest"}},
      {"mean-best", {"mean-linear", "mean-tree", "mean-forest"}},
  };
  return table;
}

bool higher_is_better(Metric m) { return m != Metric::Mse; }

}  // namespace

Instance subset_instance(const Instance& inst, const std::vector<Index>& rows) {
  Instance out;
  out.data = subset_rows(inst.data, rows);
  if (inst.has_full()) {
    out.x_full.resize(static_cast<Index>(rows.size()), inst.x_full.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.x_full.row(static_cast<Index>(r)) = inst.x_full.row(rows[r]);
  }
  return out;
}

std::string HyperParams::describe() const {
  std::string s = fmt::format("lambda_ratio={} alpha={} max_depth={} min_leaf={} n_trees={}",
                              lambda_ratio, alpha, max_depth, min_leaf, n_trees);
  if (!variant.empty()) s = variant + " " + s;
  return s;
}

std::unique_ptr<FittedModel> load_model(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "adaptive") return std::make_unique<AdaptiveFitted>(adaptive_model_from_json(j));
  if (kind == "finite-adaptive") return std::make_unique<FiniteFitted>(partition_tree_from_json(j));
  if (kind == "joint") return std::make_unique<JointFitted>(joint_model_from_json(j));
  if (kind == "mean-impute") {
    return std::make_unique<MeanImputeFitted>(from_vec(j.at("mu").get<std::vector<double>>()),
                                              predictor_from_json(j.at("predictor")));
  }
  if (kind == "mia-tree") return std::make_unique<TreeFitted>(mia_tree_from_json(j));
  if (kind == "forest") return std::make_unique<ForestFitted>(forest_from_json(j));
  if (kind == "complete-features") {
    return std::make_unique<CompleteFeaturesFitted>(j.at("d").get<Index>(),
                                                    j.at("columns").get<std::vector<Index>>(),
                                                    linear_fit_from_json(j.at("fit")));
  }
  if (kind == "oracle") return std::make_unique<OracleFitted>(linear_fit_from_json(j.at("fit")));
  throw ContractError(fmt::format("unknown model kind '{}'", kind));
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {
      "adaptive-static", "adaptive-affine-intercept", "adaptive-affine", "adaptive-poly2",
      "adaptive-fully",  "adaptive-finite",           "adaptive-best",   "joint-linear",
      "joint-tree",      "joint-forest",              "joint-best",      "mean-linear",
      "mean-tree",       "mean-forest",               "mean-best",       "cart-mia",
      "rf-mia",          "complete-features",         "oracle"};
  return names;
}

bool is_method(const std::string& name) {
  const auto& names = method_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string family_of(const std::string& method) {
  if (method.ends_with("-best")) return "best";
  if (method.ends_with("-tree") || method == "cart-mia") return "tree";
  if (method.ends_with("-forest") || method == "rf-mia") return "forest";
  return "linear";
}

GridTable default_grids() {
  GridTable g;
  for (double r : {0.1, 0.01, 0.001, 0.0}) {
    HyperParams hp;
    hp.lambda_ratio = r;
    g["linear"].push_back(hp);
  }
  for (int depth : {2, 4, 6, 8, 10}) {
    HyperParams hp;
    hp.max_depth = depth;
    hp.min_leaf = 5;
    g["tree"].push_back(hp);
  }
  HyperParams forest;
  forest.max_depth = 10;
  forest.min_leaf = 5;
  forest.n_trees = 100;
  g["forest"].push_back(forest);
  return g;
}

std::vector<HyperParams> method_grid(const std::string& method, const GridTable& grids) {
  if (!is_method(method)) throw ContractError(fmt::format("unknown method '{}'", method));
  const auto family = family_of(method);
  if (family != "best") {
    auto it = grids.find(family);
    if (it != grids.end() && !it->second.empty()) return it->second;
    return default_grids().at(family);
  }
  std::vector<HyperParams> out;
  for (const auto& candidate : best_candidates().at(method)) {
    for (HyperParams hp : method_grid(candidate, grids)) {
      hp.variant = candidate;
      out.push_back(hp);
    }
  }
  return out;
}

std::unique_ptr<FittedModel> fit_method(const std::string& method, const Instance& train,
                                        const HyperParams& hp, const MethodOptions& opts,
                                        std::uint64_t seed) {
  if (!is_method(method)) throw ContractError(fmt::format("unknown method '{}'", method));
  if (method.ends_with("-best")) {
    const auto& cands = best_candidates().at(method);
    if (std::find(cands.begin(), cands.end(), hp.variant) == cands.end()) {
      throw ContractError(fmt::format("{}: variant '{}' is not a candidate", method, hp.variant));
    }
    return fit_method(hp.variant, train, hp, opts, seed);
  }
  if (opts.audit) opts.audit(method, train.data.row_ids);
  const MaskedDataset& data = train.data;
  const Vector& y = data.y;

  if (method.starts_with("adaptive-")) {
    const auto mode_name = method.substr(9);
    if (mode_name == "finite") {
      ElasticNetSpec spec = linear_spec(hp);
      if (hp.lambda_ratio > 0.0) {
        spec.lambda = hp.lambda_ratio * lambda_max(expand_dataset(data, ExpansionMode::static_mode()), y, spec);
      }
      return std::make_unique<FiniteFitted>(fit_finite_adaptive(data, spec, opts.finite));
    }
    const ExpansionMode mode = mode_name == "fully" ? ExpansionMode::fully_adaptive()
                                                    : ExpansionMode::parse(mode_name);
    return fit_adaptive_method(mode, data, hp);
  }
  if (method.starts_with("joint-")) {
    const auto contract = contract_for(method.substr(6), hp, y, seed, opts.n_threads);
    return std::make_unique<JointFitted>(
        joint_fit(data, contract, opts.joint, default_error_metric(y), seed));
  }
  if (method.starts_with("mean-")) {
    const auto contract = contract_for(method.substr(5), hp, y, seed, opts.n_threads);
    auto imputed = mean_impute(data);
    std::shared_ptr<const Predictor> f = contract.fit(imputed.imputed, y, seed);
    return std::make_unique<MeanImputeFitted>(std::move(imputed.mu), std::move(f));
  }
  if (method == "cart-mia") return std::make_unique<TreeFitted>(fit_cart_mia(data, tree_params(hp, y, seed, 1)));
  if (method == "rf-mia") {
    return std::make_unique<ForestFitted>(fit_forest(data, tree_params(hp, y, seed, opts.n_threads)));
  }
  if (method == "complete-features") {
    validate(data);
    auto cols = never_missing_columns(data);
    LinearFit fit;
    if (cols.empty()) {
      fit.intercept = y.mean();
      fit.coefficients = Vector::Zero(0);
    } else {
      fit = fit_linear_ratio(masked_columns(data, cols), y, hp);
    }
    return std::make_unique<CompleteFeaturesFitted>(data.cols(), std::move(cols), std::move(fit));
  }
  if (method == "oracle") return std::make_unique<OracleFitted>(fit_linear_ratio(oracle_design(train), y, hp));
  throw ContractError(fmt::format("method '{}' has no implementation", method));
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Auto: return "auto";
    case Metric::R2: return "r2";
    case Metric::ScaledAuc: return "scaled_auc";
    case Metric::Mse: return "mse";
  }
  return "unknown";
}

Metric parse_metric(const std::string& s) {
  if (s == "auto") return Metric::Auto;
  if (s == "r2") return Metric::R2;
  if (s == "scaled_auc") return Metric::ScaledAuc;
  if (s == "mse") return Metric::Mse;
  throw ContractError(fmt::format("unknown metric '{}' (expected auto, r2, scaled_auc or mse)", s));
}

Metric resolve_metric(Metric m, const Vector& y) {
  if (m != Metric::Auto) return m;
  return is_binary_target(y) ? Metric::ScaledAuc : Metric::R2;
}

double evaluate_metric(Metric m, const Vector& y, const Vector& yhat) {
  switch (resolve_metric(m, y)) {
    case Metric::R2: return r_squared(y, yhat);
    case Metric::ScaledAuc: return scaled_auc(y, yhat);
    case Metric::Mse: return mean_squared_error(y, yhat);
    case Metric::Auto: break;
  }
  throw ContractError("unresolved metric");
}

std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ContractError("cv: folds must be >= 2");
  if (n < folds) throw ContractError(fmt::format("cv: {} rows cannot fill {} folds", n, folds));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  for (Index pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % folds);
  return fold;
}

CvResult kfold_cv(const Instance& train, const std::string& method,
                  const std::vector<HyperParams>& grid, int folds, std::uint64_t seed,
                  const MethodOptions& opts, Metric metric) {
  if (grid.empty()) throw ContractError("cv: empty grid");
  const Index n = train.data.rows();
  const auto fold = fold_assignment(n, folds, seed);
  const Vector& y = train.data.y;
  metric = resolve_metric(metric, y);
  const double sign = higher_is_better(metric) ? 1.0 : -1.0;

  std::vector<std::vector<Index>> fit_rows(folds), val_rows(folds);
  for (Index i = 0; i < n; ++i) {
    for (int f = 0; f < folds; ++f) (fold[i] == f ? val_rows : fit_rows)[f].push_back(i);
  }
  // A fold is scored alone only if its targets admit the metric.
  bool pooled = false;
  for (int f = 0; f < folds; ++f) {
    Vector yv(static_cast<Index>(val_rows[f].size()));
    for (std::size_t r = 0; r < val_rows[f].size(); ++r) yv[static_cast<Index>(r)] = y[val_rows[f][r]];
    try {
      evaluate_metric(metric, yv, yv);
    } catch (const std::exception&) {
      pooled = true;
    }
  }

  std::vector<Instance> fit_parts, val_parts;
  for (int f = 0; f < folds; ++f) {
    fit_parts.push_back(subset_instance(train, fit_rows[f]));
    val_parts.push_back(subset_instance(train, val_rows[f]));
  }

  CvResult out;
  const double ninf = -std::numeric_limits<double>::infinity();
  for (const auto& hp : grid) {
    double score = ninf;
    try {
      Vector oof(n);
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        const auto model = fit_method(method, fit_parts[f], hp, opts, derive_seed(seed, static_cast<std::uint64_t>(f)));
        const Vector pred = model->predict(val_parts[f]);
        for (std::size_t r = 0; r < val_rows[f].size(); ++r) oof[val_rows[f][r]] = pred[static_cast<Index>(r)];
        if (!pooled) total += sign * evaluate_metric(metric, val_parts[f].data.y, pred);
      }
      score = pooled ? sign * evaluate_metric(metric, y, oof) : total / folds;
      if (!std::isfinite(score)) score = ninf;
    } catch (const std::exception&) {
      score = ninf;
    }
    out.scores.push_back(score);
  }
  const auto best = std::max_element(out.scores.begin(), out.scores.end());
  if (*best == ninf) throw DataError(fmt::format("cv: every grid point failed for {}", method));
  out.best_index = static_cast<std::size_t>(best - out.scores.begin());
  out.best = grid[out.best_index];
  out.score = sign * *best;
  return out;
}

void ExperimentConfig::check() const {
  if (!generator && data_path.empty()) throw ContractError("config: needs a generator or a data path");
  if (generator) generator->check();
  if (methods.empty()) throw ContractError("config: method list is empty");
  for (const auto& m : methods) {
    if (!is_method(m)) throw ContractError(fmt::format("config: unknown method '{}'", m));
  }
  if (replications < 1) throw ContractError("config: replications must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractError("config: test_fraction must be in (0,1)");
  if (folds < 2) throw ContractError("config: folds must be >= 2");
  if (metrics.empty()) throw ContractError("config: metric list is empty");
  if (name.find_first_of(",\n\"") != std::string::npos) throw ContractError("config: name may not contain , \" or newlines");
  joint.check();
}

std::string ExperimentConfig::setting() const {
  if (!generator) return "csv";
  return fmt::format("{}-{}-p{}", to_string(generator->mechanism), to_string(generator->signal),
                     format_double(generator->p));
}

namespace {

auto record_key(const ResultRecord& r) {
  return std::tie(r.dataset, r.setting, r.method, r.replication, r.metric);
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::optional<std::optional<double>> parse_opt(const std::string& s) {
  if (s == "NA") return std::optional<double>{};
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return std::optional<double>{v};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

void ResultsTable::canonicalize() {
  std::sort(records.begin(), records.end(),
            [](const ResultRecord& a, const ResultRecord& b) { return record_key(a) < record_key(b); });
}

std::string format_record(const ResultRecord& r) {
  return fmt::format("{},{},{},{},{},{},{}", r.dataset, r.method, r.setting, r.replication, r.metric,
                     opt_field(r.value), opt_field(r.seconds));
}

void ResultsTable::write_csv(std::ostream& out) const {
  out << kResultsHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
}

void ResultsTable::write_csv(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", tmp));
    write_csv(out);
    if (!out) throw DataError(fmt::format("write to '{}' failed", tmp));
  }
  std::filesystem::rename(tmp, path);
}

ResultsTable ResultsTable::read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open results file '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  ResultsTable table;
  std::size_t start = 0;
  bool header = true;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;  // trailing partial line is dropped
    const std::string line = text.substr(start, nl - start);
    start = nl + 1;
    if (header) {
      header = false;
      if (line == kResultsHeader) continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) continue;
    ResultRecord r;
    r.dataset = f[0];
    r.method = f[1];
    r.setting = f[2];
    try {
      std::size_t used = 0;
      r.replication = std::stoi(f[3], &used);
      if (used != f[3].size()) continue;
    } catch (const std::exception&) {
      continue;
    }
    r.metric = f[4];
    const auto value = parse_opt(f[5]);
    const auto seconds = parse_opt(f[6]);
    if (!value || !seconds) continue;
    r.value = *value;
    r.seconds = *seconds;
    table.records.push_back(std::move(r));
  }
  return table;
}

Replication make_replication(const ExperimentConfig& config, int replication,
                             const MaskedDataset* loaded) {
  const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(replication));
  Replication rep;
  rep.setting = config.setting();
  if (config.generator) {
    GeneratorSpec spec = *config.generator;
    spec.seed = derive_seed(rep_seed, kData);
    auto split = generate_split(spec, config.test_fraction, derive_seed(rep_seed, kSplit));
    rep.train = {std::move(split.train.data), std::move(split.train.x_full)};
    rep.test = {std::move(split.test.data), std::move(split.test.x_full)};
    return rep;
  }
  if (loaded == nullptr) throw ContractError("make_replication: dataset not loaded");
  const auto [train_rows, test_rows] =
      train_test_rows(loaded->rows(), config.test_fraction, derive_seed(rep_seed, kSplit));
  rep.train.data = subset_rows(*loaded, train_rows);
  rep.test.data = subset_rows(*loaded, test_rows);
  return rep;
}

ResultsTable run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.check();
  const int jobs = std::max(1, options.jobs);
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  std::optional<MaskedDataset> loaded;
  if (!config.generator) loaded = missfit::read_csv(config.data_path, config.target);

  // Completed (method, replication) tasks from an earlier run.
  ResultsTable table;
  std::set<std::pair<std::string, int>> done;
  if (options.resume && !options.output_path.empty() && std::filesystem::exists(options.output_path)) {
    const auto previous = ResultsTable::read_csv(options.output_path);
    std::map<std::pair<std::string, int>, std::vector<ResultRecord>> by_task;
    for (const auto& r : previous.records) {
      if (r.dataset == config.name && r.setting == config.setting()) by_task[{r.method, r.replication}].push_back(r);
    }
    for (auto& [key, recs] : by_task) {
      if (recs.size() < config.metrics.size()) continue;
      done.insert(key);
      table.records.insert(table.records.end(), recs.begin(), recs.end());
    }
    log(fmt::format("resume: {} completed tasks kept", done.size()));
  }

  struct Task {
    int replication;
    std::string method;
  };
  std::vector<Task> tasks;
  std::set<int> needed;
  for (int rep = 0; rep < config.replications; ++rep) {
    for (const auto& m : config.methods) {
      if (done.count({m, rep})) continue;
      tasks.push_back({rep, m});
      needed.insert(rep);
    }
  }

  std::ofstream sink;
  if (!options.output_path.empty()) {
    table.canonicalize();
    table.write_csv(options.output_path);
    sink.open(options.output_path, std::ios::binary | std::ios::app);
    if (!sink) throw DataError(fmt::format("cannot append to '{}'", options.output_path));
  }

  std::map<int, Replication> reps;
  for (int rep : needed) reps.emplace(rep, make_replication(config, rep, loaded ? &*loaded : nullptr));

  MethodOptions mopts;
  mopts.joint = config.joint;
  mopts.finite = config.finite;
  mopts.n_threads = 1;
  mopts.audit = options.audit;

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const auto& task = tasks[t];
      const auto& rep = reps.at(task.replication);
      const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(task.replication));
      std::vector<ResultRecord> recs;
      const auto start = std::chrono::steady_clock::now();
      std::string note;
      Vector pred;
      try {
        const auto grid = method_grid(task.method, config.grids);
        const auto cv = kfold_cv(rep.train, task.method, grid, config.folds, derive_seed(rep_seed, kFolds), mopts);
        const auto model = fit_method(task.method, rep.train, cv.best, mopts, derive_seed(rep_seed, kFit));
        pred = model->predict(rep.test);
      } catch (const std::exception& e) {
        note = e.what();
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      for (Metric m : config.metrics) {
        ResultRecord r;
        r.dataset = config.name;
        r.method = task.method;
        r.setting = rep.setting;
        r.replication = task.replication;
        r.metric = to_string(resolve_metric(m, rep.test.data.y));
        if (note.empty()) {
          try {
            r.value = evaluate_metric(m, rep.test.data.y, pred);
          } catch (const std::exception& e) {
            r.note = e.what();
          }
        } else {
          r.note = note;
        }
        if (options.record_time) r.seconds = seconds;
        recs.push_back(std::move(r));
      }
      std::lock_guard lock(mu);
      std::string block;
      for (const auto& r : recs) {
        if (!r.note.empty()) log(fmt::format("{} replication {} failed: {}", r.method, r.replication, r.note));
        block += format_record(r) + "\n";
      }
      if (sink.is_open()) {
        sink << block;
        sink.flush();
      }
      log(fmt::format("done {} replication {}", task.method, task.replication));
      table.records.insert(table.records.end(), recs.begin(), recs.end());
    }
  };

  if (jobs == 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < std::min<int>(jobs, static_cast<int>(tasks.size())); ++i) pool.emplace_back(worker);
  }

  table.canonicalize();
  if (!options.output_path.empty()) {
    sink.close();
    table.write_csv(options.output_path);
  }
  return table;
}

SummaryRow summarize_values(const std::vector<double>& values) {
  SummaryRow row;
  row.count = static_cast<int>(values.size());
  if (values.empty()) return row;
  row.mean = std::accumulate(values.begin(), values.end(), 0.0) / row.count;
  if (row.count >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - row.mean) * (v - row.mean);
    row.std_error = std::sqrt(ss / (row.count - 1)) / std::sqrt(static_cast<double>(row.count));
  }
  return row;
}

std::vector<SummaryRow> summarize(const ResultsTable& table) {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::pair<std::vector<double>, int>> groups;
  for (const auto& r : table.records) {
    auto& g = groups[{r.dataset, r.setting, r.method, r.metric}];
    if (r.value) {
      g.first.push_back(*r.value);
    } else {
      ++g.second;
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, g] : groups) {
    SummaryRow row = summarize_values(g.first);
    row.dataset = std::get<0>(key);
    row.setting = std::get<1>(key);
    row.method = std::get<2>(key);
    row.metric = std::get<3>(key);
    row.failures = g.second;
    out.push_back(std::move(row));
  }
  return out;
}

WinCount count_wins(const ResultsTable& table, const std::string& a, const std::string& b,
                    const std::string& metric) {
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, double> va, vb;
  for (const auto& r : table.records) {
    if (r.metric != metric || !r.value) continue;
    if (r.method == a) va[{r.dataset, r.setting, r.replication}] = *r.value;
    if (r.method == b) vb[{r.dataset, r.setting, r.replication}] = *r.value;
  }
  const bool lower_better = metric == "mse";
  WinCount w;
  for (const auto& [key, x] : va) {
    auto it = vb.find(key);
    if (it == vb.end()) continue;
    ++w.compared;
    if (lower_better ? x < it->second : x > it->second) ++w.wins;
  }
  return w;
}

}  // namespace missfit
