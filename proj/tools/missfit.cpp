// missfit: generate, fit, predict, bench and inspect from the command line.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "missfit/bench.hpp"
#include "missfit/config.hpp"
#include "missfit/csv_io.hpp"
#include "missfit/datagen.hpp"
#include "missfit/metrics.hpp"

namespace fs = std::filesystem;
using namespace missfit;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string join_methods() {
  std::string s;
  for (const auto& m : method_names()) s += (s.empty() ? "" : ", ") + m;
  return s;
}

std::string g6(double v) { return fmt::format("{:.6g}", v); }

std::uint64_t effective_seed(std::uint64_t flag_seed) {
  const char* env = std::getenv("MISSFIT_SEED");
  if (env == nullptr || *env == '\0') return flag_seed;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("MISSFIT_SEED='{}' is not a non-negative integer", env));
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
  }
}

std::string sidecar_path(const std::string& csv) {
  fs::path p(csv);
  p.replace_extension(".json");
  return p.string();
}

void print_dataset_summary(const MaskedDataset& data) {
  const Vector frac = missing_fraction(data);
  fmt::print("n={} d={} patterns={} missing={}\n", data.rows(), data.cols(), unique_patterns(data).size(),
             g6(frac.size() ? frac.mean() : 0.0));
  for (Index j = 0; j < data.cols(); ++j) {
    const auto name = j < static_cast<Index>(data.feature_names.size()) ? data.feature_names[j]
                                                                        : fmt::format("x{}", j + 1);
    fmt::print("  {:<12} missing {}\n", name, g6(frac[j]));
  }
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  GeneratorSpec spec;
  std::string signal = "linear";
  std::string mechanism = "mcar";
  std::string out = "data.csv";
  std::string semi;
  std::string x_full_path;
  std::string missing_from;
  Index k_missing = 0;
  Index semi_k = -1;
};

int cmd_generate(GenerateArgs& a) {
  a.spec.seed = effective_seed(a.spec.seed);
  a.spec.signal = parse_signal(a.signal);
  if (!a.semi.empty()) {
    if (a.x_full_path.empty() || a.missing_from.empty()) {
      throw UsageError("--semi needs --x-full and --missing-from");
    }
    SemiSyntheticSpec s;
    s.setting = parse_semi_setting(a.semi);
    s.k = a.semi_k;
    s.k_missing = a.k_missing;
    s.signal = a.spec.signal;
    s.snr = a.spec.snr;
    s.seed = a.spec.seed;
    const auto full = read_csv(a.x_full_path, "", false);
    if (full.m.cast<int>().sum() > 0) throw DataError("--x-full must not contain missing cells");
    const auto masked = read_csv(a.missing_from, "", false);
    if (masked.rows() != full.rows() || masked.cols() != full.cols()) {
      throw DataError("--x-full and --missing-from have different shapes");
    }
    const auto semi = gen_semisynthetic(full.x, masked.m, s);
    auto data = make_dataset(full.x, semi.m, semi.y, full.feature_names);
    write_csv(a.out, data);
    json side = {{"kind", "semisynthetic"},
                 {"setting", to_string(s.setting)},
                 {"k", s.k},
                 {"k_missing", s.k_missing},
                 {"snr", s.snr},
                 {"seed", s.seed},
                 {"signal", to_json(semi.model)}};
    if (!semi.permutation.empty()) side["permutation"] = semi.permutation;
    write_text(sidecar_path(a.out), side.dump(2) + "\n");
    fmt::print("wrote {} and {}\n", a.out, sidecar_path(a.out));
    print_dataset_summary(data);
    return 0;
  }
  a.spec.mechanism = parse_mechanism(a.mechanism);
  if (a.spec.k > a.spec.d) throw UsageError(fmt::format("--k ({}) must not exceed --d ({})", a.spec.k, a.spec.d));
  const auto g = generate(a.spec);
  write_csv(a.out, g.data);
  json side = {{"kind", "synthetic"}, {"spec", to_json(a.spec)}, {"signal", to_json(g.model)}};
  if (g.thresholds.size() > 0) side["thresholds"] = std::vector<double>(g.thresholds.begin(), g.thresholds.end());
  write_text(sidecar_path(a.out), side.dump(2) + "\n");
  fmt::print("wrote {} and {}\n", a.out, sidecar_path(a.out));
  print_dataset_summary(g.data);
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string target = "y";
  std::string method;
  std::string out = "model.json";
  HyperParams hp;
  int cv = 0;
  std::uint64_t seed = 0;
  JointLimits joint;
};

int cmd_fit(FitArgs& a) {
  if (!is_method(a.method)) {
    throw UsageError(fmt::format("unknown method '{}'; valid methods: {}", a.method, join_methods()));
  }
  if (a.method.ends_with("-best") && a.cv < 2) throw UsageError(fmt::format("{} needs --cv >= 2", a.method));
  if (a.cv == 1) throw UsageError("--cv must be 0 (off) or >= 2");
  const std::uint64_t seed = effective_seed(a.seed);
  if (!fs::exists(a.data)) throw DataError(fmt::format("data file '{}' does not exist", a.data));
  Instance train;
  train.data = read_csv(a.data, a.target);
  MethodOptions opts;
  opts.joint = a.joint;
  opts.n_threads = 1;

  HyperParams hp = a.hp;
  json cv_json;
  if (a.cv >= 2) {
    const auto grid = method_grid(a.method, default_grids());
    const auto cv = kfold_cv(train, a.method, grid, a.cv, derive_seed(seed, 3), opts);
    hp = cv.best;
    cv_json = {{"folds", a.cv}, {"score", cv.score}, {"grid_size", grid.size()}, {"chosen", hp.describe()}};
  }
  const auto model = fit_method(a.method, train, hp, opts, derive_seed(seed, 4));
  const Vector pred = model->predict(train);
  const double mse = mean_squared_error(train.data.y, pred);
  json out = {{"method", a.method},
              {"seed", seed},
              {"hyperparams",
               {{"lambda_ratio", hp.lambda_ratio},
                {"alpha", hp.alpha},
                {"max_depth", hp.max_depth},
                {"min_leaf", hp.min_leaf},
                {"n_trees", hp.n_trees},
                {"variant", hp.variant}}},
              {"train", {{"mse", mse}}},
              {"feature_names", train.data.feature_names},
              {"model", model->to_json()}};
  fmt::print("method {} on {} rows x {} features\n", a.method, train.data.rows(), train.data.cols());
  fmt::print("train mse {}\n", g6(mse));
  try {
    const double score = predictive_score(train.data.y, pred);
    out["train"]["score"] = score;
    fmt::print("train {} {}\n", is_binary_target(train.data.y) ? "scaled_auc" : "r2", g6(score));
  } catch (const DataError&) {
  }
  if (!cv_json.is_null()) {
    out["cv"] = cv_json;
    fmt::print("cv score {} ({})\n", g6(cv_json["score"].get<double>()), hp.describe());
  }
  write_text(a.out, out.dump(2) + "\n");
  fmt::print("wrote {}\n", a.out);
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string data;
  std::string target = "y";
  std::string out = "predictions.csv";
};

int cmd_predict(PredictArgs& a) {
  const json j = read_json(a.model);
  const auto model = load_model(j.contains("model") ? j.at("model") : j);
  Instance inst;
  inst.data = read_csv(a.data, a.target, false);
  const Vector pred = model->predict(inst);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", a.out));
  out << "prediction\n";
  for (Index i = 0; i < pred.size(); ++i) out << format_double(pred[i]) << '\n';
  fmt::print("wrote {} predictions to {}\n", pred.size(), a.out);
  std::ifstream probe(a.data);
  std::string header;
  std::getline(probe, header);
  if (("," + header + ",").find("," + a.target + ",") != std::string::npos) {
    fmt::print("mse {}\n", g6(mean_squared_error(inst.data.y, pred)));
    try {
      fmt::print("{} {}\n", is_binary_target(inst.data.y) ? "scaled_auc" : "r2",
                 g6(predictive_score(inst.data.y, pred)));
    } catch (const DataError&) {
    }
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string config;
  std::string out = "results.csv";
  int jobs = 0;
  bool resume = false;
  bool dry_run = false;
  bool time = false;
  bool quiet = false;
  std::optional<std::uint64_t> seed;
};

void print_summary(const ResultsTable& table) {
  fmt::print("{:<28} {:<12} {:>5} {:>12} {:>12}\n", "method", "metric", "n", "mean", "se");
  for (const auto& row : summarize(table)) {
    fmt::print("{:<28} {:<12} {:>5} {:>12} {:>12}{}\n", row.method, row.metric, row.count,
               row.count ? g6(row.mean) : "NA", row.std_error ? g6(*row.std_error) : "NA",
               row.failures ? fmt::format("  ({} failed)", row.failures) : "");
  }
}

int cmd_bench(BenchArgs& a) {
  auto config = load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  config.seed = effective_seed(config.seed);
  config.check();
  const int jobs = a.jobs > 0 ? a.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (a.dry_run) {
    fmt::print("experiment {} ({})\n", config.name, config.setting());
    fmt::print("replications {}  folds {}  test_fraction {}  seed {}  jobs {}\n", config.replications,
               config.folds, g6(config.test_fraction), config.seed, jobs);
    std::size_t fits = 0;
    for (const auto& m : config.methods) {
      const auto grid = method_grid(m, config.grids);
      fmt::print("  {:<28} grid {:>3}  fits/replication {}\n", m, grid.size(),
                 grid.size() * static_cast<std::size_t>(config.folds) + 1);
      fits += grid.size() * static_cast<std::size_t>(config.folds) + 1;
    }
    fmt::print("tasks {}  model fits {}  result rows {}\n", config.methods.size() * config.replications,
               fits * static_cast<std::size_t>(config.replications),
               config.methods.size() * config.replications * config.metrics.size());
    return 0;
  }
  RunOptions opts;
  opts.jobs = jobs;
  opts.record_time = a.time;
  opts.output_path = a.out;
  opts.resume = a.resume;
  if (!a.quiet) opts.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
  const auto table = run_experiment(config, opts);
  fmt::print("wrote {} records to {}\n", table.records.size(), a.out);
  print_summary(table);
  return 0;
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const std::string& path, const std::string& target) {
  if (!fs::exists(path)) throw DataError(fmt::format("'{}' does not exist", path));
  if (fs::path(path).extension() == ".json") {
    const json j = read_json(path);
    const json& m = j.contains("model") ? j.at("model") : j;
    if (j.contains("method")) fmt::print("method {}\n", j["method"].get<std::string>());
    const auto kind = m.value("kind", std::string("?"));
    fmt::print("kind {}\n", kind);
    if (kind == "adaptive") {
      fmt::print("mode {}  d {}  expansion_size {}\n", m["mode"].get<std::string>(), m["d"].get<Index>(),
                 m["expansion_size"].get<Index>());
      if (m.contains("pattern_fits")) fmt::print("pattern fits {}\n", m["pattern_fits"].size());
    } else if (kind == "joint") {
      fmt::print("contract {}  refits {}  stop {}\n", m["contract"].get<std::string>(), m["refits"].get<int>(),
                 m["stop_reason"].get<std::string>());
      std::string mu;
      for (double v : m["mu"]) mu += (mu.empty() ? "" : " ") + g6(v);
      fmt::print("mu {}\n", mu);
    } else if (m.contains("nodes")) {
      fmt::print("nodes {}\n", m["nodes"].size());
    } else if (m.contains("trees")) {
      fmt::print("trees {}\n", m["trees"].size());
    }
    if (j.contains("train")) fmt::print("train {}\n", j["train"].dump());
    return 0;
  }
  std::ifstream probe(path);
  std::string header;
  std::getline(probe, header);
  if (header == kResultsHeader) {
    const auto table = ResultsTable::read_csv(path);
    fmt::print("{} records\n", table.records.size());
    print_summary(table);
    return 0;
  }
  const bool has_target = ("," + header + ",").find("," + target + ",") != std::string::npos;
  print_dataset_summary(read_csv(path, has_target ? target : "", false));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression with missing values: adaptive linear models and joint impute-then-regress"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "missfit 0.1.0");

  const auto unit_open = CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          std::size_t used = 0;
          const double v = std::stod(s, &used);
          if (used == s.size() && v > 0.0 && v < 1.0) return {};
        } catch (const std::exception&) {
        }
        return "must be a number strictly between 0 and 1, got " + s;
      },
      "(0,1)");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic or semi-synthetic dataset");
  g->add_option("--n", gen.spec.n, "Rows")->check(CLI::PositiveNumber);
  g->add_option("--d", gen.spec.d, "Features")->check(CLI::PositiveNumber);
  g->add_option("--r", gen.spec.r, "Latent rank of the covariance")->check(CLI::PositiveNumber);
  g->add_option("--eps", gen.spec.eps, "Ridge added to the covariance")->check(CLI::PositiveNumber);
  g->add_option("--k", gen.spec.k, "Features in the signal support")->check(CLI::PositiveNumber);
  g->add_option("--snr", gen.spec.snr, "Signal-to-noise ratio")->check(CLI::PositiveNumber);
  g->add_option("--signal", gen.signal, "linear | nn")->check(CLI::IsMember({"linear", "nn"}));
  g->add_option("--mechanism", gen.mechanism, "mcar | censoring")->check(CLI::IsMember({"mcar", "censoring"}));
  g->add_option("--p", gen.spec.p, "Missing fraction in (0,1)")->check(unit_open);
  g->add_option("--seed", gen.spec.seed, "Random seed (MISSFIT_SEED overrides)");
  g->add_option("--out", gen.out, "Output CSV; the sidecar JSON goes next to it");
  g->add_option("--semi", gen.semi, "Semi-synthetic setting: mar | nmar | am")
      ->check(CLI::IsMember({"mar", "nmar", "am"}));
  g->add_option("--x-full", gen.x_full_path, "Fully observed feature CSV (semi-synthetic)");
  g->add_option("--missing-from", gen.missing_from, "CSV whose NA cells give the mask (semi-synthetic)");
  g->add_option("--k-missing", gen.k_missing, "Signal features affected by missingness")->check(CLI::NonNegativeNumber);
  g->add_option("--semi-k", gen.semi_k, "Signal features (default min(10, d))");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a model on a CSV dataset");
  f->add_option("--data", fit.data, "Training CSV")->required();
  f->add_option("--target", fit.target, "Target column");
  f->add_option("--method", fit.method, "Method name")->required();
  f->add_option("--out", fit.out, "Model JSON");
  f->add_option("--lambda-ratio", fit.hp.lambda_ratio, "lambda as a fraction of lambda_max")->check(CLI::NonNegativeNumber);
  f->add_option("--alpha", fit.hp.alpha, "ElasticNet mixing in [0,1]")->check(CLI::Range(0.0, 1.0));
  f->add_option("--max-depth", fit.hp.max_depth, "Tree depth")->check(CLI::PositiveNumber);
  f->add_option("--min-leaf", fit.hp.min_leaf, "Minimum rows per tree leaf")->check(CLI::PositiveNumber);
  f->add_option("--n-trees", fit.hp.n_trees, "Forest size")->check(CLI::PositiveNumber);
  f->add_option("--cv", fit.cv, "Tune over the default grid with this many folds (0 = off)")
      ->check(CLI::NonNegativeNumber);
  f->add_option("--max-outer", fit.joint.max_outer, "Joint: outer iterations")->check(CLI::PositiveNumber);
  f->add_option("--max-cycles", fit.joint.max_cycles, "Joint: coordinate cycles per iteration")
      ->check(CLI::PositiveNumber);
  f->add_option("--seed", fit.seed, "Random seed (MISSFIT_SEED overrides)");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Predict with a fitted model");
  p->add_option("--model", pred.model, "Model JSON")->required();
  p->add_option("--data", pred.data, "CSV to predict on")->required();
  p->add_option("--target", pred.target, "Target column, used for scoring when present");
  p->add_option("--out", pred.out, "Predictions CSV");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Run a benchmark config");
  b->add_option("--config", bench.config, "Experiment JSON")->required();
  b->add_option("--out", bench.out, "Results CSV");
  b->add_option("--jobs", bench.jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  b->add_flag("--resume", bench.resume, "Keep completed records in --out and run the rest");
  b->add_flag("--dry-run", bench.dry_run, "Print the plan without fitting");
  b->add_flag("--time", bench.time, "Record wall time per task in the seconds column");
  b->add_flag("--quiet", bench.quiet, "No progress lines on stderr");
  b->add_option("--seed", bench.seed, "Override the config seed (MISSFIT_SEED overrides both)");

  std::string inspect_path;
  std::string inspect_target = "y";
  auto* ins = app.add_subcommand("inspect", "Summarize a dataset, model or results file");
  ins->add_option("path", inspect_path, "File to inspect")->required();
  ins->add_option("--target", inspect_target, "Target column of a dataset CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*f) return cmd_fit(fit);
    if (*p) return cmd_predict(pred);
    if (*b) return cmd_bench(bench);
    if (*ins) return cmd_inspect(inspect_path, inspect_target);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
