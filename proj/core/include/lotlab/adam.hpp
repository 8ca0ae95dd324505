#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "lotlab/params.hpp"

namespace lotlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam with one base learning rate per layer.
///
/// Besides stepping, it reports the two step-size summaries the threshold
/// machinery compares against:
///   effective_step: mean over parameters of eta / ((1 - beta1^t)(sqrt(vhat) + eps))
///   agg_step:       eta / (RMS(sqrt(vhat)) + eps)
class Adam {
 public:
  Adam(const ParamSet& like, AdamConfig cfg, double base_eta);

  /// One update. L2 is expected to already be folded into `grads`.
  void step(ParamSet& params, const ParamSet& grads);

  /// Throws StateError before the first step.
  double effective_step(const Scope& scope) const;
  double agg_step(const Scope& scope) const;

  /// Zero moments, t = 0, learning rates back to their configured values.
  void reset();

  std::int64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const ParamSet& first_moment() const { return m_; }
  const ParamSet& second_moment() const { return v_; }

  double eta(std::size_t layer) const { return eta_.at(layer); }
  double eta(std::string_view layer_id) const;
  const std::vector<double>& etas() const { return eta_; }
  void set_eta(std::size_t layer, double value);
  void set_eta(std::string_view layer_id, double value);

  const std::vector<std::string>& layer_ids() const { return ids_; }

 private:
  void require_started(const char* what) const;

  AdamConfig cfg_;
  ParamSet m_;
  ParamSet v_;
  std::int64_t t_ = 0;
  std::vector<double> eta_;
  std::vector<double> eta_initial_;
  std::vector<std::string> ids_;
};

}  // namespace lotlab
