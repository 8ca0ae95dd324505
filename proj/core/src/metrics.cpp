#include "lotlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lotlab/errors.hpp"

namespace lotlab {

namespace {

Bound make_bound(double numerator, double denominator) {
  if (!(denominator > 0.0)) return {kBoundCap, true};
  const double v = numerator / denominator;
  if (!(v <= kBoundCap)) return {kBoundCap, true};
  return {v, false};
}

void require_nonnegative(double x, const char* name) {
  if (!(x >= 0.0))
    throw ArgumentError(std::string(name) + " must be finite and >= 0");
}

}  // namespace

double scoped_squared_norm(const ParamSet& g, const Scope& scope) {
  double s = 0.0;
  for (std::size_t i : scoped_layers(g, scope))
    s += g.layers[i].weights.squaredNorm() + g.layers[i].bias.squaredNorm();
  return s;
}

double minibatch_grad_variance(std::span<const ParamSet> per_sample,
                               const Scope& scope) {
  if (per_sample.empty())
    throw ArgumentError("minibatch_grad_variance: no gradients");
  for (const auto& g : per_sample)
    require_same_shape(per_sample.front(), g, "minibatch_grad_variance");

  ParamSet mean = per_sample.front().zeros_like();
  for (const auto& g : per_sample) mean += g;
  mean *= 1.0 / static_cast<double>(per_sample.size());

  GradVarianceAccumulator acc(std::move(mean));
  for (const auto& g : per_sample) acc.add(g);
  double total = 0.0;
  for (std::size_t i : scoped_layers(per_sample.front(), scope))
    total += acc.variance(i);
  return total;
}

GradVarianceAccumulator::GradVarianceAccumulator(ParamSet mean)
    : mean_(std::move(mean)), sum_sq_(mean_.layers.size(), 0.0) {}

void GradVarianceAccumulator::add(const ParamSet& g) {
  require_same_shape(mean_, g, "GradVarianceAccumulator");
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    sum_sq_[i] += (g.layers[i].weights - mean_.layers[i].weights).squaredNorm() +
                  (g.layers[i].bias - mean_.layers[i].bias).squaredNorm();
  }
  ++count_;
}

double GradVarianceAccumulator::variance(std::size_t layer) const {
  if (count_ == 0) throw StateError("GradVarianceAccumulator: no samples");
  return sum_sq_.at(layer) / static_cast<double>(count_);
}

double GradVarianceAccumulator::variance() const {
  double total = 0.0;
  for (std::size_t i = 0; i < sum_sq_.size(); ++i) total += variance(i);
  return total;
}

double normalized_sharpness(double lambda_max, double alpha_agg) {
  if (!(alpha_agg > 0.0))
    throw ArgumentError("normalized_sharpness: alpha_agg must be > 0");
  return alpha_agg * lambda_max;
}

void WindowConfig::validate() const {
  if (capacity < 1) throw ConfigError("window capacity must be >= 1");
  if (!(ema_decay > 0.0 && ema_decay < 1.0))
    throw ConfigError("ema_decay must lie in (0, 1)");
  if (!(eps_vol > 0.0)) throw ConfigError("eps_vol must be > 0");
}

WindowStats::WindowStats(WindowConfig cfg) : cfg_(cfg) { cfg_.validate(); }

WindowSnapshot WindowStats::push(double lambda_bar) {
  if (!std::isfinite(lambda_bar))
    throw NumericError("non-finite normalized sharpness", "");
  if (queue_.size() == cfg_.capacity) queue_.pop_front();
  queue_.push_back(lambda_bar);
  // The first sample seeds the EMA so it does not start biased toward zero.
  mu_ = has_mu_ ? (1.0 - cfg_.ema_decay) * mu_ + cfg_.ema_decay * lambda_bar
                : lambda_bar;
  has_mu_ = true;
  return snapshot();
}

WindowSnapshot WindowStats::snapshot() const {
  WindowSnapshot s;
  s.count = queue_.size();
  s.mu = mu_;
  s.armed = s.count >= 2;
  if (s.armed) {
    double mean = 0.0;
    for (double x : queue_) mean += x;
    mean /= static_cast<double>(s.count);
    double ss = 0.0;
    for (double x : queue_) ss += (x - mean) * (x - mean);
    s.var = ss / static_cast<double>(s.count);
  }
  s.vol = s.var / (s.mu + cfg_.eps_vol);
  return s;
}

void BoundConfig::validate() const {
  if (!(kappa > 0.0)) throw ConfigError("kappa must be > 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(c_contraction > 0.0 && c_contraction < 1.0))
    throw ConfigError("c_contraction must lie in (0, 1)");
}

Bound alpha_g_star(double grad_sq_norm, double sigma_ps_sq, std::size_t batch) {
  require_nonnegative(grad_sq_norm, "grad_sq_norm");
  require_nonnegative(sigma_ps_sq, "sigma_ps_sq");
  if (batch < 1) throw ArgumentError("batch size must be >= 1");
  return make_bound(static_cast<double>(batch) * grad_sq_norm, sigma_ps_sq);
}

Bound alpha_vol_star(double vol, const BoundConfig& cfg) {
  require_nonnegative(vol, "vol");
  return make_bound(1.0, cfg.kappa * vol);
}

Bound cantelli_cap(double mu, double sigma, double delta) {
  require_nonnegative(mu, "mu");
  require_nonnegative(sigma, "sigma");
  if (!(delta > 0.0 && delta < 1.0))
    throw ArgumentError("delta must lie in (0, 1)");
  return make_bound(2.0, mu + sigma * std::sqrt((1.0 - delta) / delta));
}

Bound contraction_bound(double mu, double var, double c) {
  require_nonnegative(mu, "mu");
  require_nonnegative(var, "var");
  if (!(c > 0.0 && c < 1.0)) throw ArgumentError("c must lie in (0, 1)");
  return make_bound(2.0 * c * mu, mu * mu + var);
}

CombinedBound combined_bound(double grad_sq_norm, double sigma_ps_sq, double vol,
                             std::size_t batch, const BoundConfig& cfg) {
  require_nonnegative(grad_sq_norm, "grad_sq_norm");
  require_nonnegative(sigma_ps_sq, "sigma_ps_sq");
  require_nonnegative(vol, "vol");
  if (batch < 1) throw ArgumentError("batch size must be >= 1");
  CombinedBound out;
  out.sigma_tilde_sq = sigma_ps_sq + cfg.beta * grad_sq_norm * vol;
  out.alpha_tilde_star =
      make_bound(static_cast<double>(batch) * grad_sq_norm, out.sigma_tilde_sq);
  return out;
}

ThresholdReport make_report(std::string layer_id, double alpha,
                            double grad_sq_norm, double sigma_ps_sq,
                            std::size_t batch, double lambda_bar,
                            const WindowSnapshot& window,
                            const BoundConfig& cfg) {
  ThresholdReport r;
  r.layer_id = std::move(layer_id);
  r.alpha = alpha;
  r.grad_sq_norm = grad_sq_norm;
  r.sigma_ps_sq = sigma_ps_sq;
  r.lambda_bar = lambda_bar;
  r.vol = std::max(window.vol, 0.0);
  r.armed = window.armed;
  r.alpha_g_star = alpha_g_star(grad_sq_norm, sigma_ps_sq, batch);
  r.alpha_vol_star = alpha_vol_star(r.vol, cfg);
  r.cantelli_cap =
      cantelli_cap(std::max(window.mu, 0.0), std::sqrt(window.var), cfg.delta);
  const CombinedBound cb =
      combined_bound(grad_sq_norm, sigma_ps_sq, r.vol, batch, cfg);
  r.sigma_tilde_sq = cb.sigma_tilde_sq;
  r.alpha_tilde_star = cb.alpha_tilde_star;
  return r;
}

LotPrediction predict_lot(const std::vector<StepFlags>& tasks) {
  LotPrediction out;
  std::size_t total_hits = 0;
  for (const auto& steps : tasks) {
    if (steps.empty()) {
      out.per_task.push_back(std::numeric_limits<double>::quiet_NaN());
      out.empty_task.push_back(true);
      continue;
    }
    std::size_t hits = 0;
    for (const auto& layers : steps) {
      for (bool crossed : layers) {
        if (crossed) {
          ++hits;
          break;
        }
      }
    }
    out.per_task.push_back(static_cast<double>(hits) /
                           static_cast<double>(steps.size()));
    out.empty_task.push_back(false);
    total_hits += hits;
    out.steps += steps.size();
  }
  if (out.steps > 0)
    out.overall = static_cast<double>(total_hits) / static_cast<double>(out.steps);
  return out;
}

double unit_sign_entropy(const std::vector<Eigen::MatrixXd>& hidden_preacts) {
  double total = 0.0;
  std::size_t units = 0;
  for (const auto& z : hidden_preacts) {
    if (z.rows() == 0) continue;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double p =
          static_cast<double>((z.col(j).array() > 0.0).count()) /
          static_cast<double>(z.rows());
      double h = 0.0;
      if (p > 0.0 && p < 1.0) h = -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
      total += h;
      ++units;
    }
  }
  return units ? total / static_cast<double>(units) : 0.0;
}

Diagnostics diagnostics(const ParamSet& params, const ParamSet& grads,
                        const std::vector<Eigen::MatrixXd>& hidden_preacts) {
  require_same_shape(params, grads, "diagnostics");
  Diagnostics d;
  d.weight_norm = params.norm();
  d.grad_norm = grads.norm();
  if (d.weight_norm > 0.0) {
    d.grad_param_ratio = d.grad_norm / d.weight_norm;
  } else {
    d.ratio_degenerate = true;
  }
  d.unit_sign_entropy = unit_sign_entropy(hidden_preacts);
  return d;
}

}  // namespace lotlab
