#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "lotlab/params.hpp"

namespace lotlab {

// ---------------------------------------------------------------------------
// Gradient noise
// ---------------------------------------------------------------------------

/// (1/B) sum_i ||g_i - gbar||^2 over the scoped parameters. No Bessel
/// correction; this is the plug-in for the per-sample variance sigma^2_ps.
double minibatch_grad_variance(std::span<const ParamSet> per_sample,
                               const Scope& scope);

/// Same estimator without holding all B gradients: the mean is supplied up
/// front (the batch gradient) and each sample's squared deviation is
/// accumulated per layer as it streams past.
class GradVarianceAccumulator {
 public:
  explicit GradVarianceAccumulator(ParamSet mean);

  void add(const ParamSet& g);
  std::size_t count() const { return count_; }
  double variance(std::size_t layer) const;
  double variance() const;  // all layers

 private:
  ParamSet mean_;
  std::vector<double> sum_sq_;
  std::size_t count_ = 0;
};

/// Squared norm of `g` restricted to the scope.
double scoped_squared_norm(const ParamSet& g, const Scope& scope);

// ---------------------------------------------------------------------------
// Normalized sharpness and its rolling statistics
// ---------------------------------------------------------------------------

/// lambda_bar = alpha_agg * lambda_max. Throws ArgumentError unless
/// alpha_agg > 0.
double normalized_sharpness(double lambda_max, double alpha_agg);

struct WindowConfig {
  std::size_t capacity = 30;
  double ema_decay = 0.1;  // mu <- (1 - d) mu + d x
  double eps_vol = 1e-8;

  void validate() const;
};

struct WindowSnapshot {
  double mu = 0.0;
  double var = 0.0;
  double vol = 0.0;
  std::size_t count = 0;
  bool armed = false;  // at least two samples seen
};

/// EMA mean plus a fixed-length FIFO for the population variance, giving
/// Vol = var / (mu + eps).
class WindowStats {
 public:
  explicit WindowStats(WindowConfig cfg = {});

  /// Throws NumericError on a non-finite sample.
  WindowSnapshot push(double lambda_bar);
  WindowSnapshot snapshot() const;

  const std::deque<double>& samples() const { return queue_; }
  const WindowConfig& config() const { return cfg_; }

 private:
  WindowConfig cfg_;
  std::deque<double> queue_;
  double mu_ = 0.0;
  bool has_mu_ = false;
};

// ---------------------------------------------------------------------------
// Critical steps
// ---------------------------------------------------------------------------

inline constexpr double kBoundCap = 1e6;

struct BoundConfig {
  double kappa = 1.0;
  double beta = 0.5;
  double delta = 0.1;
  double c_contraction = 0.5;

  void validate() const;
};

/// A bound value. Degenerate denominators (or values above kBoundCap) are
/// replaced by kBoundCap with `capped` set.
struct Bound {
  double value = kBoundCap;
  bool capped = true;
};

/// B ||g||^2 / sigma^2_ps
Bound alpha_g_star(double grad_sq_norm, double sigma_ps_sq, std::size_t batch);

/// 1 / (kappa Vol)
Bound alpha_vol_star(double vol, const BoundConfig& cfg);

/// 2 / (mu + sigma sqrt((1 - delta) / delta)): keeps P(alpha lambda_bar >= 2)
/// below delta by Cantelli's inequality.
Bound cantelli_cap(double mu, double sigma, double delta);

/// 2 c mu / (mu^2 + sigma^2): the small-step contraction condition.
Bound contraction_bound(double mu, double var, double c);

struct CombinedBound {
  double sigma_tilde_sq = 0.0;
  Bound alpha_tilde_star;
};

/// sigma~^2 = sigma^2_ps + beta ||g||^2 Vol and alpha~* = B ||g||^2 / sigma~^2.
CombinedBound combined_bound(double grad_sq_norm, double sigma_ps_sq, double vol,
                             std::size_t batch, const BoundConfig& cfg);

/// Per-layer snapshot of the step and every bound on it.
struct ThresholdReport {
  std::string layer_id;
  double alpha = 0.0;
  double grad_sq_norm = 0.0;
  double sigma_ps_sq = 0.0;
  double lambda_bar = 0.0;
  Bound alpha_g_star;
  Bound alpha_vol_star;
  Bound cantelli_cap;
  double sigma_tilde_sq = 0.0;
  Bound alpha_tilde_star;
  double vol = 0.0;
  bool armed = false;
};

ThresholdReport make_report(std::string layer_id, double alpha,
                            double grad_sq_norm, double sigma_ps_sq,
                            std::size_t batch, double lambda_bar,
                            const WindowSnapshot& window,
                            const BoundConfig& cfg);

// ---------------------------------------------------------------------------
// Loss-of-trainability predictor
// ---------------------------------------------------------------------------

/// flags[step][layer]: alpha^(l) > alpha~*^(l) at that step.
using StepFlags = std::vector<std::vector<bool>>;

struct LotPrediction {
  std::vector<double> per_task;    // NaN for an empty task
  std::vector<bool> empty_task;
  double overall = 0.0;            // over every step of every task
  std::size_t steps = 0;
};

/// Fraction of steps in each task where at least one layer crosses.
LotPrediction predict_lot(const std::vector<StepFlags>& tasks);

// ---------------------------------------------------------------------------
// Single-metric diagnostics
// ---------------------------------------------------------------------------

struct Diagnostics {
  double weight_norm = 0.0;
  double grad_norm = 0.0;
  double grad_param_ratio = 0.0;
  bool ratio_degenerate = false;  // weight_norm == 0
  double unit_sign_entropy = 0.0;
};

/// Binary (base-2) entropy of the fraction of samples with positive
/// pre-activation, averaged over all hidden units.
double unit_sign_entropy(const std::vector<Eigen::MatrixXd>& hidden_preacts);

Diagnostics diagnostics(const ParamSet& params, const ParamSet& grads,
                        const std::vector<Eigen::MatrixXd>& hidden_preacts);

}  // namespace lotlab
