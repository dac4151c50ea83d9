#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridfield/activation.hpp"
#include "gridfield/connectivity.hpp"
#include "gridfield/experiments.hpp"
#include "gridfield/fokker_planck.hpp"

namespace gridfield::cli {

/// Bad configuration; key is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct GridConfig {
  int n = 64;
  int n_s = 64;
  double s_max = 1.3;
};

struct ActivationConfig {
  std::string kind = "sigmoid";
  double epsilon = 0.01;  // smooth_eps, smooth_sqrt
  double gain = 15.0;     // sigmoid
  std::optional<double> value;  // constant; required for that kind

  Activation build() const;
};

struct RunConfig {
  GridConfig grid;
  KernelParams kernel;
  ShiftSet shift{1};
  ActivationConfig activation;
  SolverParams solver;
  SweepConfig sweep;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  RunConfig();
  TorusGrid torus() const { return TorusGrid(grid.n); }
  SGrid sgrid() const { return SGrid(grid.n_s, grid.s_max); }
};

/// Defaults, then the JSON file (if any), then "key.path=value" overrides.
/// Unknown keys, wrong types and out-of-range values raise ConfigError.
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides = {});
RunConfig parse_config_json(nlohmann::json j, const std::vector<std::string>& overrides = {});

nlohmann::json to_json(const RunConfig& config);

}  // namespace gridfield::cli
