#include "lotlab/curvature.hpp"

#include <cmath>

#include "lotlab/errors.hpp"

namespace lotlab {

void CurvatureProbe::validate() const {
  if (power_iters < 1) throw ConfigError("power_iters must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("power iteration tol must be > 0");
}

ParamSet hvp(const ParamSet& params, const Activation& act, const Batch& batch,
             const Regularizer& reg, const ParamSet& v) {
  require_same_shape(params, v, "hvp direction");
  const double vnorm = v.norm();
  if (!(vnorm > 0.0)) throw ArgumentError("hvp: direction has zero norm");
  ParamSet out = loss_hvp(params, act, batch, reg, v);
  if (!out.all_finite()) throw NumericError("non-finite Hessian-vector product", "");
  return out;
}

EigenEstimate top_eigenvalue(const ParamSet& params, const Activation& act,
                             const Batch& batch, const Regularizer& reg,
                             const CurvatureProbe& probe) {
  probe.validate();
  if (params.size() == 0) throw ArgumentError("top_eigenvalue: no parameters");

  EigenEstimate est;
  est.vector = params.zeros_like();
  Rng rng(probe.seed);
  for (auto& l : est.vector.layers) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i)
      l.weights.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.normal();
  }
  est.vector *= 1.0 / est.vector.norm();

  double prev = 0.0;
  for (int k = 1; k <= probe.power_iters; ++k) {
    ParamSet hv = hvp(params, act, batch, reg, est.vector);
    const double rayleigh = est.vector.dot(hv);
    const double hv_norm = hv.norm();
    est.iterations = k;
    if (hv_norm == 0.0) {
      est.lambda_max = 0.0;
      est.converged = true;
      return est;
    }
    est.lambda_max = rayleigh;
    hv *= 1.0 / hv_norm;
    est.vector = std::move(hv);
    if (k > 1 && std::abs(rayleigh - prev) < probe.tol * std::abs(rayleigh)) {
      est.converged = true;
      return est;
    }
    prev = rayleigh;
  }
  return est;
}

Eigen::MatrixXd hessian_columns(const ParamSet& params, const Activation& act,
                                const Batch& batch, const Regularizer& reg) {
  const std::size_t n = params.size();
  if (n > kMaxDenseHessian)
    throw CapacityError("exact_hessian: " + std::to_string(n) +
                        " parameters exceeds the dense limit of " +
                        std::to_string(kMaxDenseHessian));
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd cols(ni, ni);
  ParamSet basis = params.zeros_like();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(ni);
  for (Eigen::Index j = 0; j < ni; ++j) {
    e(j) = 1.0;
    basis.assign(e);
    cols.col(j) = hvp(params, act, batch, reg, basis).flatten();
    e(j) = 0.0;
  }
  return cols;
}

Eigen::MatrixXd exact_hessian(const ParamSet& params, const Activation& act,
                              const Batch& batch, const Regularizer& reg) {
  const Eigen::MatrixXd cols = hessian_columns(params, act, batch, reg);
  return 0.5 * (cols + cols.transpose());
}

std::size_t effective_rank(const Eigen::VectorXd& eigs, double rel_threshold) {
  if (eigs.size() == 0) throw ArgumentError("effective_rank: no eigenvalues");
  if (!(rel_threshold > 0.0 && rel_threshold < 1.0))
    throw ArgumentError("effective_rank: threshold must lie in (0, 1)");
  const double top = eigs.cwiseAbs().maxCoeff();
  if (top == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i)
    if (std::abs(eigs(i)) > rel_threshold * top) ++r;
  return r;
}

}  // namespace lotlab
