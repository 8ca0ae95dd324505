#include "lotlab/scheduler.hpp"

#include <algorithm>

#include "lotlab/errors.hpp"

namespace lotlab {

void ControllerConfig::validate() const {
  if (!(cool > 0.0 && cool < 1.0)) throw ConfigError("cool must lie in (0, 1)");
  if (!(warm > 1.0)) throw ConfigError("warm must be > 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (interval_k < 1) throw ConfigError("interval_K must be >= 1");
  if (window < 1) throw ConfigError("controller window must be >= 1");
  if (!(eta_min > 0.0 && eta_min <= eta_max))
    throw ConfigError("need 0 < eta_min <= eta_max");
  if (!(timid_frac > 0.0 && timid_frac <= 1.0))
    throw ConfigError("timid_frac must lie in (0, 1]");
  if (!(warm_phase_frac >= 0.0 && warm_phase_frac <= 1.0))
    throw ConfigError("warm_phase_frac must lie in [0, 1]");
}

const char* to_string(DecisionLabel label) {
  switch (label) {
    case DecisionLabel::kHeld: return "held";
    case DecisionLabel::kCooled: return "cooled";
    case DecisionLabel::kWarmed: return "warmed";
  }
  return "?";
}

DecisionResult decide(std::span<const ThresholdReport> reports, std::int64_t t,
                      std::int64_t total_steps, const LrMap& etas,
                      const ControllerConfig& cfg) {
  cfg.validate();
  DecisionResult out{etas, {}};
  const bool warm_phase =
      static_cast<double>(t) < cfg.warm_phase_frac * static_cast<double>(total_steps);

  for (const auto& r : reports) {
    auto it = out.etas.find(r.layer_id);
    if (it == out.etas.end())
      throw ConfigError("decide: unknown layer id '" + r.layer_id + "'");

    LayerDecision d{r.layer_id, DecisionLabel::kHeld, false};
    if (r.armed) {
      const double limit = cfg.gamma * r.alpha_tilde_star.value;
      double eta = it->second;
      if (r.alpha > limit && r.alpha > cfg.abs_floor) {
        eta *= cfg.cool;
        d.label = DecisionLabel::kCooled;
      } else if (warm_phase && r.alpha < cfg.timid_frac * limit) {
        eta *= cfg.warm;
        d.label = DecisionLabel::kWarmed;
      }
      const double clamped = std::clamp(eta, cfg.eta_min, cfg.eta_max);
      d.clamped = clamped != eta;
      it->second = clamped;
    }
    out.decisions.push_back(std::move(d));
  }
  return out;
}

std::vector<Crossing> crossing_flags(std::span<const ThresholdReport> reports) {
  std::vector<Crossing> out;
  out.reserve(reports.size());
  for (const auto& r : reports) {
    if (!r.armed || r.alpha_tilde_star.capped) {
      out.push_back({false, true});
    } else {
      out.push_back({r.alpha > r.alpha_tilde_star.value, false});
    }
  }
  return out;
}

}  // namespace lotlab
