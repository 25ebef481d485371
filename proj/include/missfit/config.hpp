#pragma once

#include <string>

#include <json.hpp>

#include "missfit/bench.hpp"

namespace missfit {

// Config problem; what() starts with the JSON path of the offending field,
// e.g. "$.generator.p: must be in (0,1)".
class ConfigError : public ContractError {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : ContractError(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace missfit
