#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lotlab/metrics.hpp"

namespace lotlab {

struct ControllerConfig {
  double gamma = 0.8;   // safety factor on the combined bound
  double cool = 0.99;
  double warm = 1.01;
  std::size_t window = 30;
  std::int64_t interval_k = 40;
  double abs_floor = 0.12;       // never cool a layer whose step is below this
  double warm_phase_frac = 0.3;  // warm only while t < frac * T
  double timid_frac = 0.5;       // "timid" means alpha < timid_frac * gamma * safe
  double eta_min = 1e-6;
  double eta_max = 1e-1;

  void validate() const;
};

enum class DecisionLabel { kHeld, kCooled, kWarmed };

const char* to_string(DecisionLabel label);

using LrMap = std::map<std::string, double>;

struct LayerDecision {
  std::string layer_id;
  DecisionLabel label = DecisionLabel::kHeld;
  bool clamped = false;  // eta was pinned to [eta_min, eta_max]
};

struct DecisionResult {
  LrMap etas;
  std::vector<LayerDecision> decisions;  // in report order
};

/// One controller decision at step t of a T-step run: cool layers whose
/// effective step exceeds gamma * alpha~* (and the absolute floor), warm
/// timid layers during the warm phase, hold everything else. Unarmed layers
/// are held. Throws ConfigError for a report whose layer is not in `etas`.
DecisionResult decide(std::span<const ThresholdReport> reports, std::int64_t t,
                      std::int64_t total_steps, const LrMap& etas,
                      const ControllerConfig& cfg);

struct Crossing {
  bool crossed = false;
  bool degenerate = false;  // unarmed or capped bound; never counts as a crossing
};

/// Raw alpha > alpha~* per layer (no safety factor), for the predictor.
std::vector<Crossing> crossing_flags(std::span<const ThresholdReport> reports);

}  // namespace lotlab
