#include "lotlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lotlab/errors.hpp"

namespace lotlab {

Activation Activation::leaky_relu(double slope) {
  if (!(slope >= 0.0 && slope <= 1.0))
    throw ConfigError("leaky_relu slope must lie in [0, 1]");
  return {Kind::kLeakyRelu, slope};
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::kRelu: return "relu";
    case Kind::kLeakyRelu: return "leaky_relu";
    case Kind::kCrelu: return "crelu";
    case Kind::kLinear: return "linear";
  }
  return "?";
}

Activation parse_activation(std::string_view name, double slope) {
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu") return Activation::leaky_relu(slope);
  if (name == "crelu") return Activation::crelu();
  if (name == "linear") return Activation::linear();
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Regularizer Regularizer::l2(double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("l2 coefficient must be >= 0");
  return {Kind::kL2, lambda, nullptr};
}

Regularizer Regularizer::wasserstein(double lambda, ParamSet init) {
  if (!(lambda >= 0.0))
    throw ConfigError("wasserstein coefficient must be >= 0");
  return {Kind::kWasserstein, lambda,
          std::make_shared<const ParamSet>(std::move(init))};
}

std::string Regularizer::name() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kL2: return "l2";
    case Kind::kWasserstein: return "wasserstein";
  }
  return "?";
}

ParamSet init_params(const MlpShape& shape, const Activation& act, Rng& rng) {
  if (shape.input_dim == 0 || shape.num_classes == 0)
    throw ConfigError("network needs nonzero input and output widths");
  std::vector<std::size_t> outs = shape.hidden;
  outs.push_back(shape.num_classes);

  ParamSet p;
  std::size_t fan_in = shape.input_dim;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto out = static_cast<Eigen::Index>(outs[i]);
    const auto in = static_cast<Eigen::Index>(fan_in);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Layer l{"fc" + std::to_string(i + 1), Eigen::MatrixXd(out, in),
            Eigen::VectorXd::Zero(out)};
    // Fill column-major so the draw order matches the flattened order.
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r)
        l.weights(r, c) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(l));
    fan_in = act.output_width(outs[i]);
  }
  return p;
}

Eigen::VectorXd crelu_apply(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(2 * x.size());
  out.head(x.size()) = x.cwiseMax(0.0);
  out.tail(x.size()) = (-x).cwiseMax(0.0);
  return out;
}

namespace {

void check_shapes(const ParamSet& params, const Activation& act,
                  Eigen::Index input_dim) {
  if (params.layers.empty()) throw ConfigError("network has no layers");
  Eigen::Index width = input_dim;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (l.weights.cols() != width)
      throw ConfigError("layer " + l.id + " expects input width " +
                        std::to_string(l.weights.cols()) + ", got " +
                        std::to_string(width));
    if (l.bias.size() != l.weights.rows())
      throw ConfigError("layer " + l.id + " bias length mismatch");
    width = static_cast<Eigen::Index>(
        act.output_width(static_cast<std::size_t>(l.weights.rows())));
  }
}

void check_labels(const Batch& batch, Eigen::Index classes) {
  if (batch.labels.empty()) throw ConfigError("empty batch");
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.labels.size())
    throw ConfigError("batch inputs and labels disagree in length");
  for (int y : batch.labels)
    if (y < 0 || y >= classes)
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
}

Eigen::MatrixXd activate(const Activation& act, const Eigen::MatrixXd& z) {
  switch (act.kind) {
    case Activation::Kind::kRelu:
      return z.cwiseMax(0.0);
    case Activation::Kind::kLeakyRelu:
      return z.unaryExpr([s = act.slope](double v) { return v > 0 ? v : s * v; });
    case Activation::Kind::kCrelu: {
      Eigen::MatrixXd out(z.rows(), 2 * z.cols());
      out.leftCols(z.cols()) = z.cwiseMax(0.0);
      out.rightCols(z.cols()) = (-z).cwiseMax(0.0);
      return out;
    }
    case Activation::Kind::kLinear:
      return z;
  }
  return z;
}

// Back through the activation: gradient w.r.t. pre-activations.
Eigen::MatrixXd activate_backward(const Activation& act,
                                  const Eigen::MatrixXd& z,
                                  const Eigen::MatrixXd& grad_out) {
  switch (act.kind) {
    case Activation::Kind::kRelu:
      return grad_out.cwiseProduct(
          z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }));
    case Activation::Kind::kLeakyRelu:
      return grad_out.cwiseProduct(
          z.unaryExpr([s = act.slope](double v) { return v > 0 ? 1.0 : s; }));
    case Activation::Kind::kCrelu: {
      const Eigen::Index n = z.cols();
      const Eigen::MatrixXd pos =
          z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
      const Eigen::MatrixXd neg =
          z.unaryExpr([](double v) { return v < 0 ? 1.0 : 0.0; });
      return grad_out.leftCols(n).cwiseProduct(pos) -
             grad_out.rightCols(n).cwiseProduct(neg);
    }
    case Activation::Kind::kLinear:
      return grad_out;
  }
  return grad_out;
}

// Directional derivative of the activation at z along dz.
Eigen::MatrixXd activate_jvp(const Activation& act, const Eigen::MatrixXd& z,
                             const Eigen::MatrixXd& dz) {
  if (act.kind != Activation::Kind::kCrelu) return activate_backward(act, z, dz);
  Eigen::MatrixXd out(z.rows(), 2 * z.cols());
  out.leftCols(z.cols()) =
      dz.cwiseProduct(z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }));
  out.rightCols(z.cols()) =
      -dz.cwiseProduct(z.unaryExpr([](double v) { return v < 0 ? 1.0 : 0.0; }));
  return out;
}

struct Trace {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[i] feeds layer i
  std::vector<Eigen::MatrixXd> preacts;  // preacts[i] is layer i's output
};

Trace run_forward(const ParamSet& params, const Activation& act,
                  const Eigen::MatrixXd& x) {
  check_shapes(params, act, x.cols());
  Trace tr;
  const std::size_t nl = params.layers.size();
  tr.inputs.reserve(nl);
  tr.preacts.reserve(nl);
  tr.inputs.push_back(x);
  for (std::size_t i = 0; i < nl; ++i) {
    const auto& l = params.layers[i];
    Eigen::MatrixXd z = tr.inputs[i] * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    if (i + 1 < nl) tr.inputs.push_back(activate(act, z));
    tr.preacts.push_back(std::move(z));
  }
  return tr;
}

// Row-wise softmax cross-entropy. Returns per-row losses and fills `probs`.
Eigen::VectorXd softmax_xent(const Eigen::MatrixXd& logits,
                             const std::vector<int>& labels,
                             Eigen::MatrixXd& probs, std::size_t& correct) {
  const Eigen::Index b = logits.rows();
  Eigen::VectorXd losses(b);
  probs.resize(logits.rows(), logits.cols());
  correct = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index argmax;
    const double m = logits.row(i).maxCoeff(&argmax);
    if (argmax == labels[static_cast<std::size_t>(i)]) ++correct;
    const auto shifted = (logits.row(i).array() - m).eval();
    const auto e = shifted.exp().eval();
    const double s = e.sum();
    probs.row(i) = e / s;
    losses(i) = std::log(s) - shifted(labels[static_cast<std::size_t>(i)]);
  }
  return losses;
}

void locate_non_finite(const ParamSet& params, const Trace& tr) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw NumericError("non-finite parameters", l.id);
    if (!tr.preacts[i].allFinite())
      throw NumericError("non-finite pre-activations", l.id);
  }
  throw NumericError("non-finite loss", params.layers.back().id);
}

// Backward pass from dlogits; returns per-layer gradients of the pre-activation
// deltas, leaving accumulation to the caller.
std::vector<Eigen::MatrixXd> backward_deltas(const ParamSet& params,
                                             const Activation& act,
                                             const Trace& tr,
                                             Eigen::MatrixXd dlogits) {
  const std::size_t nl = params.layers.size();
  std::vector<Eigen::MatrixXd> deltas(nl);
  deltas[nl - 1] = std::move(dlogits);
  for (std::size_t i = nl - 1; i > 0; --i) {
    const Eigen::MatrixXd da = deltas[i] * params.layers[i].weights;
    deltas[i - 1] = activate_backward(act, tr.preacts[i - 1], da);
  }
  return deltas;
}

}  // namespace

ForwardResult forward(const ParamSet& params, const Activation& act,
                      const Eigen::MatrixXd& inputs) {
  Trace tr = run_forward(params, act, inputs);
  ForwardResult out;
  out.logits = std::move(tr.preacts.back());
  tr.preacts.pop_back();
  out.hidden_preacts = std::move(tr.preacts);
  return out;
}

PenaltyGrad wasserstein_penalty(const Eigen::MatrixXd& current,
                                const Eigen::MatrixXd& init) {
  if (current.rows() != init.rows() || current.cols() != init.cols())
    throw ConfigError("wasserstein_penalty: shape mismatch");
  const auto n = static_cast<std::size_t>(current.size());
  PenaltyGrad out;
  out.grad = Eigen::MatrixXd::Zero(current.rows(), current.cols());
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double* cur = current.data();
  std::stable_sort(order.begin(), order.end(),
                   [cur](std::size_t a, std::size_t b) { return cur[a] < cur[b]; });
  std::vector<double> sorted_init(init.data(), init.data() + n);
  std::sort(sorted_init.begin(), sorted_init.end());

  const double inv_n = 1.0 / static_cast<double>(n);
  double* g = out.grad.data();
  for (std::size_t k = 0; k < n; ++k) {
    const double d = cur[order[k]] - sorted_init[k];
    out.value += d * d;
    g[order[k]] = 2.0 * inv_n * d;
  }
  out.value *= inv_n;
  return out;
}

Penalty regularizer_penalty(const ParamSet& params, const Regularizer& reg) {
  Penalty p{0.0, params.zeros_like()};
  switch (reg.kind) {
    case Regularizer::Kind::kNone:
      break;
    case Regularizer::Kind::kL2:
      p.value = reg.lambda * params.squared_norm();
      p.grads = 2.0 * reg.lambda * params;
      break;
    case Regularizer::Kind::kWasserstein: {
      if (!reg.init_snapshot)
        throw ConfigError("wasserstein regularizer has no init snapshot");
      require_same_shape(params, *reg.init_snapshot, "wasserstein snapshot");
      for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto pg = wasserstein_penalty(params.layers[i].weights,
                                      reg.init_snapshot->layers[i].weights);
        p.value += reg.lambda * pg.value;
        p.grads.layers[i].weights = reg.lambda * pg.grad;
      }
      break;
    }
  }
  return p;
}

LossGrad loss_grad(const ParamSet& params, const Activation& act,
                   const Batch& batch, const Regularizer& reg) {
  const Trace tr = run_forward(params, act, batch.inputs);
  const Eigen::MatrixXd& logits = tr.preacts.back();
  check_labels(batch, logits.cols());

  LossGrad out;
  Eigen::MatrixXd probs;
  const Eigen::VectorXd losses =
      softmax_xent(logits, batch.labels, probs, out.correct);
  const double b = static_cast<double>(batch.size());
  const double data_loss = losses.sum() / b;

  Penalty pen = regularizer_penalty(params, reg);
  out.penalty = pen.value;
  out.loss = data_loss + pen.value;
  if (!std::isfinite(out.loss)) locate_non_finite(params, tr);

  for (std::size_t i = 0; i < batch.size(); ++i)
    probs(static_cast<Eigen::Index>(i), batch.labels[i]) -= 1.0;
  probs /= b;
  const auto deltas = backward_deltas(params, act, tr, std::move(probs));

  out.grads = std::move(pen.grads);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    out.grads.layers[i].weights.noalias() += deltas[i].transpose() * tr.inputs[i];
    out.grads.layers[i].bias += deltas[i].colwise().sum().transpose();
  }
  for (const auto& l : out.grads.layers)
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw NumericError("non-finite gradient", l.id);
  return out;
}

ParamSet loss_hvp(const ParamSet& params, const Activation& act,
                  const Batch& batch, const Regularizer& reg, const ParamSet& v) {
  require_same_shape(params, v, "hvp direction");
  const Trace tr = run_forward(params, act, batch.inputs);
  const std::size_t nl = params.layers.size();
  check_labels(batch, tr.preacts.back().cols());

  // Forward pass of the R-operator: directional derivatives of every
  // activation and pre-activation along v.
  std::vector<Eigen::MatrixXd> r_in(nl), r_pre(nl);
  r_in[0] = Eigen::MatrixXd::Zero(batch.inputs.rows(), batch.inputs.cols());
  for (std::size_t i = 0; i < nl; ++i) {
    const auto& l = params.layers[i];
    r_pre[i] = r_in[i] * l.weights.transpose() + tr.inputs[i] * v.layers[i].weights.transpose();
    r_pre[i].rowwise() += v.layers[i].bias.transpose();
    if (i + 1 < nl) r_in[i + 1] = activate_jvp(act, tr.preacts[i], r_pre[i]);
  }

  Eigen::MatrixXd probs;
  std::size_t correct = 0;
  const Eigen::VectorXd losses =
      softmax_xent(tr.preacts.back(), batch.labels, probs, correct);
  if (!losses.allFinite()) locate_non_finite(params, tr);
  const double b = static_cast<double>(batch.size());

  // Softmax Jacobian applied to the logit direction, row by row.
  Eigen::MatrixXd r_delta = probs.cwiseProduct(r_pre[nl - 1]);
  const Eigen::VectorXd pr = r_delta.rowwise().sum();
  r_delta -= probs.cwiseProduct(pr.replicate(1, probs.cols()));
  r_delta /= b;
  for (std::size_t i = 0; i < batch.size(); ++i)
    probs(static_cast<Eigen::Index>(i), batch.labels[i]) -= 1.0;
  probs /= b;
  const auto deltas = backward_deltas(params, act, tr, std::move(probs));

  ParamSet out = params.zeros_like();
  for (std::size_t i = nl; i-- > 0;) {
    out.layers[i].weights.noalias() = r_delta.transpose() * tr.inputs[i] +
                                      deltas[i].transpose() * r_in[i];
    out.layers[i].bias = r_delta.colwise().sum().transpose();
    if (i == 0) break;
    // Piecewise-linear activations have zero curvature away from the kinks.
    const Eigen::MatrixXd da = r_delta * params.layers[i].weights +
                               deltas[i] * v.layers[i].weights;
    r_delta = activate_backward(act, tr.preacts[i - 1], da);
  }

  switch (reg.kind) {
    case Regularizer::Kind::kNone:
      break;
    case Regularizer::Kind::kL2:
      out.axpy(2.0 * reg.lambda, v);
      break;
    case Regularizer::Kind::kWasserstein:
      // The sort permutation is locally constant.
      for (std::size_t i = 0; i < nl; ++i) {
        const double n = static_cast<double>(v.layers[i].weights.size());
        out.layers[i].weights += (2.0 * reg.lambda / n) * v.layers[i].weights;
      }
      break;
  }
  return out;
}

double loss_value(const ParamSet& params, const Activation& act,
                  const Batch& batch, const Regularizer& reg) {
  const Trace tr = run_forward(params, act, batch.inputs);
  check_labels(batch, tr.preacts.back().cols());
  Eigen::MatrixXd probs;
  std::size_t correct = 0;
  const Eigen::VectorXd losses =
      softmax_xent(tr.preacts.back(), batch.labels, probs, correct);
  return losses.sum() / static_cast<double>(batch.size()) +
         regularizer_penalty(params, reg).value;
}

void for_each_per_sample_grad(
    const ParamSet& params, const Activation& act, const Batch& batch,
    const Regularizer& reg,
    const std::function<void(std::size_t, const ParamSet&)>& fn) {
  const Trace tr = run_forward(params, act, batch.inputs);
  check_labels(batch, tr.preacts.back().cols());

  Eigen::MatrixXd probs;
  std::size_t correct = 0;
  const Eigen::VectorXd losses =
      softmax_xent(tr.preacts.back(), batch.labels, probs, correct);
  const Penalty pen = regularizer_penalty(params, reg);
  if (!losses.allFinite() || !std::isfinite(pen.value))
    locate_non_finite(params, tr);

  // Rows of the unscaled deltas are exactly the per-sample deltas: samples do
  // not interact in an MLP without normalization layers.
  for (std::size_t i = 0; i < batch.size(); ++i)
    probs(static_cast<Eigen::Index>(i), batch.labels[i]) -= 1.0;
  const auto deltas = backward_deltas(params, act, tr, std::move(probs));

  ParamSet g = pen.grads;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto row = static_cast<Eigen::Index>(s);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      g.layers[i].weights.noalias() =
          deltas[i].row(row).transpose() * tr.inputs[i].row(row);
      g.layers[i].weights += pen.grads.layers[i].weights;
      g.layers[i].bias = deltas[i].row(row).transpose() + pen.grads.layers[i].bias;
    }
    fn(s, g);
  }
}

std::vector<ParamSet> per_sample_grads(const ParamSet& params,
                                       const Activation& act,
                                       const Batch& batch,
                                       const Regularizer& reg) {
  std::vector<ParamSet> out;
  out.reserve(batch.size());
  for_each_per_sample_grad(params, act, batch, reg,
                           [&](std::size_t, const ParamSet& g) { out.push_back(g); });
  return out;
}

}  // namespace lotlab
