#include "lotlab/adam.hpp"

#include <cmath>

#include "lotlab/errors.hpp"

namespace lotlab {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
}

Adam::Adam(const ParamSet& like, AdamConfig cfg, double base_eta)
    : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {
  cfg_.validate();
  if (!(base_eta > 0.0)) throw ConfigError("learning rate must be > 0");
  eta_.assign(like.layers.size(), base_eta);
  eta_initial_ = eta_;
  for (const auto& l : like.layers) ids_.push_back(l.id);
}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  require_same_shape(params, m_, "adam params");
  require_same_shape(grads, m_, "adam grads");
  for (const auto& l : grads.layers)
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw NumericError("non-finite gradient passed to Adam", l.id);

  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  auto update = [&](auto& w, auto& m, auto& v, const auto& g, double eta) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    w.array() -= eta * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weights, m_.layers[i].weights, v_.layers[i].weights,
           grads.layers[i].weights, eta_[i]);
    update(params.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias,
           grads.layers[i].bias, eta_[i]);
  }
}

void Adam::require_started(const char* what) const {
  if (t_ < 1)
    throw StateError(std::string(what) + " needs at least one optimizer step");
}

double Adam::effective_step(const Scope& scope) const {
  require_started("effective_step");
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i : scoped_layers(v_, scope)) {
    const auto& l = v_.layers[i];
    const double scale = eta_[i] / c1;
    sum += (scale / ((l.weights.array() / c2).sqrt() + cfg_.eps)).sum();
    sum += (scale / ((l.bias.array() / c2).sqrt() + cfg_.eps)).sum();
    count += l.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double Adam::agg_step(const Scope& scope) const {
  require_started("agg_step");
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  double vhat_sum = 0.0;
  double eta_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i : scoped_layers(v_, scope)) {
    const auto& l = v_.layers[i];
    vhat_sum += (l.weights.sum() + l.bias.sum()) / c2;
    eta_sum += eta_[i] * static_cast<double>(l.size());
    count += l.size();
  }
  if (count == 0) return 0.0;
  const double n = static_cast<double>(count);
  // Global scope with unequal layer rates uses the parameter-weighted mean rate.
  return (eta_sum / n) / (std::sqrt(vhat_sum / n) + cfg_.eps);
}

void Adam::reset() {
  m_ = m_.zeros_like();
  v_ = v_.zeros_like();
  t_ = 0;
  eta_ = eta_initial_;
}

double Adam::eta(std::string_view layer_id) const {
  return eta_.at(m_.layer_index(layer_id));
}

void Adam::set_eta(std::size_t layer, double value) {
  if (!(value > 0.0)) throw ConfigError("learning rate must be > 0");
  eta_.at(layer) = value;
}

void Adam::set_eta(std::string_view layer_id, double value) {
  set_eta(m_.layer_index(layer_id), value);
}

}  // namespace lotlab
