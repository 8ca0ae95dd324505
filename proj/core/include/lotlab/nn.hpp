#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lotlab/params.hpp"
#include "lotlab/rng.hpp"

namespace lotlab {

struct Activation {
  enum class Kind { kRelu, kLeakyRelu, kCrelu, kLinear };

  Kind kind = Kind::kRelu;
  double slope = 0.0;  // leaky_relu only, in [0, 1]

  static Activation relu() { return {Kind::kRelu, 0.0}; }
  static Activation leaky_relu(double slope);
  static Activation crelu() { return {Kind::kCrelu, 0.0}; }
  static Activation linear() { return {Kind::kLinear, 0.0}; }

  /// Width of the activation output for `width` pre-activations.
  std::size_t output_width(std::size_t width) const {
    return kind == Kind::kCrelu ? 2 * width : width;
  }
  std::string name() const;
};

/// Accepts "relu", "leaky_relu", "crelu", "linear".
Activation parse_activation(std::string_view name, double slope = 0.0);

struct Regularizer {
  enum class Kind { kNone, kL2, kWasserstein };

  Kind kind = Kind::kNone;
  double lambda = 0.0;
  std::shared_ptr<const ParamSet> init_snapshot;  // wasserstein only

  static Regularizer none() { return {}; }
  static Regularizer l2(double lambda);
  /// Penalizes drift of each layer's weight distribution from `init`.
  static Regularizer wasserstein(double lambda, ParamSet init);

  std::string name() const;
};

struct Batch {
  Eigen::MatrixXd inputs;   // B x d
  std::vector<int> labels;  // B entries in [0, C)

  std::size_t size() const { return labels.size(); }
};

struct MlpShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // pre-activation widths
  std::size_t num_classes = 0;
};

/// Kaiming-uniform (ReLU gain) on the fan-in, zero biases. For CReLU the
/// fan-in of a layer following a CReLU is the doubled width it actually sees.
/// Layer ids are fc1, fc2, ...
ParamSet init_params(const MlpShape& shape, const Activation& act, Rng& rng);

struct ForwardResult {
  Eigen::MatrixXd logits;                     // B x C
  std::vector<Eigen::MatrixXd> hidden_preacts;  // one per hidden layer
};

ForwardResult forward(const ParamSet& params, const Activation& act,
                      const Eigen::MatrixXd& inputs);
inline ForwardResult forward(const ParamSet& params, const Activation& act,
                             const Batch& batch) {
  return forward(params, act, batch.inputs);
}

/// [max(x, 0), max(-x, 0)]
Eigen::VectorXd crelu_apply(const Eigen::VectorXd& x);

struct LossGrad {
  double loss = 0.0;       // data loss + penalty
  double penalty = 0.0;
  std::size_t correct = 0;  // argmax hits in the batch
  ParamSet grads;
};

/// Mean softmax cross-entropy plus regularizer penalty, and its exact
/// gradient.
LossGrad loss_grad(const ParamSet& params, const Activation& act,
                   const Batch& batch, const Regularizer& reg);

/// Exact Hessian-vector product of the loss_grad objective along `v`
/// (Pearlmutter's R-operator). At activation kinks and sort ties the
/// one-sided derivative taken by loss_grad is used.
ParamSet loss_hvp(const ParamSet& params, const Activation& act,
                  const Batch& batch, const Regularizer& reg, const ParamSet& v);

/// Loss only; cheaper than loss_grad when no gradient is needed.
double loss_value(const ParamSet& params, const Activation& act,
                  const Batch& batch, const Regularizer& reg);

/// Calls `fn(i, g_i)` for every sample in order, where g_i is the gradient
/// of sample i's cross-entropy plus the full regularizer gradient. The
/// ParamSet passed to `fn` is reused between calls.
void for_each_per_sample_grad(
    const ParamSet& params, const Activation& act, const Batch& batch,
    const Regularizer& reg,
    const std::function<void(std::size_t, const ParamSet&)>& fn);

std::vector<ParamSet> per_sample_grads(const ParamSet& params,
                                       const Activation& act,
                                       const Batch& batch,
                                       const Regularizer& reg);

struct PenaltyGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

/// Squared 1-D Wasserstein-2 distance between the empirical distributions of
/// the entries of `current` and `init`: mean of squared differences of the
/// sorted entries. The gradient is routed back through the sort of `current`.
PenaltyGrad wasserstein_penalty(const Eigen::MatrixXd& current,
                                const Eigen::MatrixXd& init);

struct Penalty {
  double value = 0.0;
  ParamSet grads;
};

/// Regularizer value and gradient (lambda already applied).
Penalty regularizer_penalty(const ParamSet& params, const Regularizer& reg);

}  // namespace lotlab
