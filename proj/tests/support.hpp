#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lotlab/nn.hpp"
#include "lotlab/params.hpp"
#include "lotlab/rng.hpp"

namespace lotlab::testing {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline ParamSet random_net(const std::vector<std::size_t>& widths, const Activation& act,
                           std::uint64_t seed) {
  MlpShape shape;
  shape.input_dim = widths.front();
  shape.hidden.assign(widths.begin() + 1, widths.end() - 1);
  shape.num_classes = widths.back();
  Rng rng = Rng::stream(seed, "test-net");
  ParamSet p = init_params(shape, act, rng);
  // Nonzero biases so every bias gradient is exercised.
  for (auto& l : p.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.normal(0.0, 0.3);
  return p;
}

inline Batch random_batch(std::size_t b, std::size_t d, std::size_t classes,
                          std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "test-batch");
  Batch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < batch.inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < batch.inputs.cols(); ++j) batch.inputs(i, j) = rng.normal();
  for (std::size_t i = 0; i < b; ++i)
    batch.labels.push_back(static_cast<int>(rng.uniform_index(classes)));
  return batch;
}

inline ParamSet random_like(const ParamSet& like, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "test-dir");
  ParamSet v = like.zeros_like();
  Eigen::VectorXd flat(static_cast<Eigen::Index>(v.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = rng.normal();
  v.assign(flat);
  return v;
}

// Central differences of loss_value over the flattened parameters.
inline Eigen::VectorXd fd_gradient(const ParamSet& params, const Activation& act,
                                   const Batch& batch, const Regularizer& reg,
                                   double h = 1e-5) {
  const Eigen::VectorXd w = params.flatten();
  Eigen::VectorXd g(w.size());
  ParamSet probe = params;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Eigen::VectorXd wp = w, wm = w;
    wp(i) += h;
    wm(i) -= h;
    probe.assign(wp);
    const double lp = loss_value(probe, act, batch, reg);
    probe.assign(wm);
    const double lm = loss_value(probe, act, batch, reg);
    g(i) = (lp - lm) / (2.0 * h);
  }
  return g;
}

}  // namespace lotlab::testing
