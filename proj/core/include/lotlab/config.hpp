#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lotlab/adam.hpp"
#include "lotlab/curvature.hpp"
#include "lotlab/metrics.hpp"
#include "lotlab/nn.hpp"
#include "lotlab/scheduler.hpp"
#include "lotlab/tasks.hpp"

namespace lotlab {

enum class Mode { kVanilla, kReset, kScheduled };

const char* to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct ModelConfig {
  std::size_t hidden_width = 256;
  std::size_t hidden_layers = 1;
  std::string activation = "relu";
  double leaky_slope = 0.3;
  std::string regularizer = "none";  // none | l2 | wasserstein
  double reg_lambda = 1e-3;
};

struct OptimizerConfig {
  double eta = 1e-3;
  AdamConfig adam;
};

struct RunConfig {
  StreamConfig stream;
  ModelConfig model;
  OptimizerConfig optimizer;
  BoundConfig bounds;
  WindowConfig window;
  std::optional<ControllerConfig> controller;
  Mode mode = Mode::kVanilla;
  std::size_t log_interval = 40;  // 0 disables probes
  CurvatureProbe probe;
  std::vector<std::uint64_t> seeds{0};

  /// Throws ConfigError. A scheduled run without an explicit controller
  /// gets the default one; vanilla and reset runs drop it.
  void finalize();
};

/// Environment variable naming the directory relative MNIST paths resolve
/// against.
inline constexpr const char* kDataDirEnv = "LOTLAB_DATA_DIR";

/// Sets one dotted key (e.g. "optimizer.eta") from its text value.
/// Throws ConfigError for unknown keys or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key=value` lines; `#` starts a comment; blank lines ignored.
void apply_config_text(RunConfig& cfg, std::istream& in);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its resolved value, one `key=value` per line, in a fixed
/// order. Feeding the output back through apply_config_text reproduces cfg.
std::string to_config_text(const RunConfig& cfg);

}  // namespace lotlab
