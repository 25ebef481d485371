#include "missfit/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace missfit {
namespace {

using nlohmann::json;

std::string type_name(const json& v) { return v.type_name(); }

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path, fmt::format("expected an object, got {}", type_name(v)));
}

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw ConfigError(path + "." + key, "unknown field");
  }
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, fmt::format("expected a number, got {}", type_name(v)));
  return v.get<double>();
}

long long get_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, fmt::format("expected an integer, got {}", type_name(v)));
  return v.get<long long>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, fmt::format("expected a string, got {}", type_name(v)));
  return v.get<std::string>();
}

template <class F>
auto convert(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

GeneratorSpec parse_generator(const json& g, const std::string& path) {
  require_object(g, path);
  reject_unknown(g, path, {"n", "d", "r", "eps", "signal", "k", "snr", "mechanism", "p"});
  GeneratorSpec s;
  if (g.contains("n")) s.n = get_integer(g["n"], path + ".n");
  if (g.contains("d")) s.d = get_integer(g["d"], path + ".d");
  if (g.contains("r")) s.r = get_integer(g["r"], path + ".r");
  if (g.contains("eps")) s.eps = get_number(g["eps"], path + ".eps");
  if (g.contains("k")) s.k = get_integer(g["k"], path + ".k");
  if (g.contains("snr")) s.snr = get_number(g["snr"], path + ".snr");
  if (g.contains("p")) s.p = get_number(g["p"], path + ".p");
  if (g.contains("signal")) {
    const auto v = get_string(g["signal"], path + ".signal");
    s.signal = convert(path + ".signal", [&] { return parse_signal(v); });
  }
  if (g.contains("mechanism")) {
    const auto v = get_string(g["mechanism"], path + ".mechanism");
    s.mechanism = convert(path + ".mechanism", [&] { return parse_mechanism(v); });
  }
  if (s.n < 2) throw ConfigError(path + ".n", "must be >= 2");
  if (s.d < 1) throw ConfigError(path + ".d", "must be >= 1");
  if (s.r < 1) throw ConfigError(path + ".r", "must be >= 1");
  if (!(s.eps > 0.0)) throw ConfigError(path + ".eps", "must be > 0");
  if (s.k < 1 || s.k > s.d) throw ConfigError(path + ".k", "must be in [1, d]");
  if (!(s.snr > 0.0)) throw ConfigError(path + ".snr", "must be > 0");
  if (!(s.p > 0.0 && s.p < 1.0)) throw ConfigError(path + ".p", "must be in (0,1)");
  return s;
}

HyperParams parse_point(const json& v, const std::string& path) {
  require_object(v, path);
  reject_unknown(v, path, {"lambda_ratio", "alpha", "max_depth", "min_leaf", "n_trees"});
  HyperParams hp;
  if (v.contains("lambda_ratio")) hp.lambda_ratio = get_number(v["lambda_ratio"], path + ".lambda_ratio");
  if (v.contains("alpha")) hp.alpha = get_number(v["alpha"], path + ".alpha");
  if (v.contains("max_depth")) hp.max_depth = static_cast<int>(get_integer(v["max_depth"], path + ".max_depth"));
  if (v.contains("min_leaf")) hp.min_leaf = get_integer(v["min_leaf"], path + ".min_leaf");
  if (v.contains("n_trees")) hp.n_trees = static_cast<int>(get_integer(v["n_trees"], path + ".n_trees"));
  if (!(hp.lambda_ratio >= 0.0)) throw ConfigError(path + ".lambda_ratio", "must be >= 0");
  if (!(hp.alpha >= 0.0 && hp.alpha <= 1.0)) throw ConfigError(path + ".alpha", "must be in [0,1]");
  if (hp.max_depth < 1) throw ConfigError(path + ".max_depth", "must be >= 1");
  if (hp.min_leaf < 1) throw ConfigError(path + ".min_leaf", "must be >= 1");
  if (hp.n_trees < 1) throw ConfigError(path + ".n_trees", "must be >= 1");
  return hp;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  const std::string root = "$";
  require_object(j, root);
  reject_unknown(j, root,
                 {"name", "generator", "data", "methods", "replications", "test_fraction", "folds", "seed",
                  "metrics", "grids", "joint", "finite"});
  ExperimentConfig c;
  if (j.contains("name")) c.name = get_string(j["name"], "$.name");
  if (c.name.empty() || c.name.find_first_of(",\n\"") != std::string::npos) {
    throw ConfigError("$.name", "must be non-empty without commas, quotes or newlines");
  }
  if (j.contains("generator") == j.contains("data")) {
    throw ConfigError(root, "exactly one of 'generator' and 'data' is required");
  }
  if (j.contains("generator")) c.generator = parse_generator(j["generator"], "$.generator");
  if (j.contains("data")) {
    const auto& d = j["data"];
    require_object(d, "$.data");
    reject_unknown(d, "$.data", {"path", "target"});
    if (!d.contains("path")) throw ConfigError("$.data.path", "required");
    c.data_path = get_string(d["path"], "$.data.path");
    if (d.contains("target")) c.target = get_string(d["target"], "$.data.target");
  }

  if (!j.contains("methods")) throw ConfigError("$.methods", "required");
  const auto& methods = j["methods"];
  if (!methods.is_array() || methods.empty()) throw ConfigError("$.methods", "expected a non-empty array");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto path = fmt::format("$.methods[{}]", i);
    const auto name = get_string(methods[i], path);
    if (!is_method(name)) throw ConfigError(path, fmt::format("unknown method '{}'", name));
    c.methods.push_back(name);
  }

  if (j.contains("replications")) {
    c.replications = static_cast<int>(get_integer(j["replications"], "$.replications"));
    if (c.replications < 1) throw ConfigError("$.replications", "must be >= 1");
  }
  if (j.contains("test_fraction")) {
    c.test_fraction = get_number(j["test_fraction"], "$.test_fraction");
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("$.test_fraction", "must be in (0,1)");
  }
  if (j.contains("folds")) {
    c.folds = static_cast<int>(get_integer(j["folds"], "$.folds"));
    if (c.folds < 2) throw ConfigError("$.folds", "must be >= 2");
  }
  if (j.contains("seed")) {
    const auto& s = j["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("$.seed", "expected a non-negative integer");
    }
    c.seed = s.get<std::uint64_t>();
  }
  if (j.contains("metrics")) {
    const auto& ms = j["metrics"];
    if (!ms.is_array() || ms.empty()) throw ConfigError("$.metrics", "expected a non-empty array");
    c.metrics.clear();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const auto path = fmt::format("$.metrics[{}]", i);
      const auto name = get_string(ms[i], path);
      c.metrics.push_back(convert(path, [&] { return parse_metric(name); }));
    }
  }
  if (j.contains("grids")) {
    const auto& g = j["grids"];
    require_object(g, "$.grids");
    reject_unknown(g, "$.grids", {"linear", "tree", "forest"});
    for (const auto& [family, points] : g.items()) {
      const auto path = "$.grids." + family;
      if (!points.is_array() || points.empty()) throw ConfigError(path, "expected a non-empty array");
      std::vector<HyperParams> grid;
      for (std::size_t i = 0; i < points.size(); ++i) grid.push_back(parse_point(points[i], fmt::format("{}[{}]", path, i)));
      c.grids[family] = std::move(grid);
    }
  }
  if (j.contains("joint")) {
    const auto& v = j["joint"];
    require_object(v, "$.joint");
    reject_unknown(v, "$.joint", {"max_outer", "max_cycles", "min_rel_improve"});
    if (v.contains("max_outer")) c.joint.max_outer = static_cast<int>(get_integer(v["max_outer"], "$.joint.max_outer"));
    if (v.contains("max_cycles")) c.joint.max_cycles = static_cast<int>(get_integer(v["max_cycles"], "$.joint.max_cycles"));
    if (v.contains("min_rel_improve")) c.joint.min_rel_improve = get_number(v["min_rel_improve"], "$.joint.min_rel_improve");
    if (c.joint.max_outer < 1) throw ConfigError("$.joint.max_outer", "must be >= 1");
    if (c.joint.max_cycles < 1) throw ConfigError("$.joint.max_cycles", "must be >= 1");
    if (!(c.joint.min_rel_improve > 0.0)) throw ConfigError("$.joint.min_rel_improve", "must be > 0");
  }
  if (j.contains("finite")) {
    const auto& v = j["finite"];
    require_object(v, "$.finite");
    reject_unknown(v, "$.finite", {"max_depth", "min_leaf", "min_gain"});
    if (v.contains("max_depth")) c.finite.max_depth = static_cast<int>(get_integer(v["max_depth"], "$.finite.max_depth"));
    if (v.contains("min_leaf")) c.finite.min_leaf = get_integer(v["min_leaf"], "$.finite.min_leaf");
    if (v.contains("min_gain")) c.finite.min_gain = get_number(v["min_gain"], "$.finite.min_gain");
    if (c.finite.max_depth < 0) throw ConfigError("$.finite.max_depth", "must be >= 0");
    if (c.finite.min_leaf < 1) throw ConfigError("$.finite.min_leaf", "must be >= 1");
    if (!(c.finite.min_gain >= 0.0)) throw ConfigError("$.finite.min_gain", "must be >= 0");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open config '{}'", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", fmt::format("invalid JSON: {}", e.what()));
  }
  auto config = parse_config(j);
  if (!config.data_path.empty()) {
    std::filesystem::path p(config.data_path);
    if (p.is_relative()) config.data_path = (std::filesystem::path(path).parent_path() / p).string();
  }
  return config;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  if (c.generator) {
    j["generator"] = to_json(*c.generator);
    j["generator"].erase("seed");
  } else {
    j["data"] = {{"path", c.data_path}, {"target", c.target}};
  }
  j["methods"] = c.methods;
  j["replications"] = c.replications;
  j["test_fraction"] = c.test_fraction;
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  std::vector<std::string> metrics;
  for (auto m : c.metrics) metrics.push_back(to_string(m));
  j["metrics"] = metrics;
  json grids = json::object();
  for (const auto& [family, points] : c.grids) {
    json arr = json::array();
    for (const auto& hp : points) {
      arr.push_back({{"lambda_ratio", hp.lambda_ratio},
                     {"alpha", hp.alpha},
                     {"max_depth", hp.max_depth},
                     {"min_leaf", hp.min_leaf},
                     {"n_trees", hp.n_trees}});
    }
    grids[family] = arr;
  }
  j["grids"] = grids;
  j["joint"] = {{"max_outer", c.joint.max_outer},
                {"max_cycles", c.joint.max_cycles},
                {"min_rel_improve", c.joint.min_rel_improve}};
  j["finite"] = {{"max_depth", c.finite.max_depth},
                 {"min_leaf", c.finite.min_leaf},
                 {"min_gain", c.finite.min_gain}};
  return j;
}

}  // namespace missfit
