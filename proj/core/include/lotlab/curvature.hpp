#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

#include "lotlab/nn.hpp"
#include "lotlab/params.hpp"

namespace lotlab {

/// Budget and start vector for power iteration on the loss Hessian.
struct CurvatureProbe {
  int power_iters = 100;
  double tol = 1e-6;  // relative change of the Rayleigh quotient
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// H v for the Hessian of the full objective (data loss + penalty) on
/// `batch`, computed exactly by loss_hvp.
ParamSet hvp(const ParamSet& params, const Activation& act, const Batch& batch,
             const Regularizer& reg, const ParamSet& v);

struct EigenEstimate {
  double lambda_max = 0.0;  // signed Rayleigh quotient of the dominant mode
  bool converged = false;
  int iterations = 0;
  ParamSet vector;  // unit-norm eigenvector estimate
};

/// Power iteration with per-step normalization; finds the eigenvalue of
/// largest magnitude.
EigenEstimate top_eigenvalue(const ParamSet& params, const Activation& act,
                             const Batch& batch, const Regularizer& reg,
                             const CurvatureProbe& probe);

inline constexpr std::size_t kMaxDenseHessian = 2000;

/// Columns H e_j as returned by hvp, without symmetrization.
Eigen::MatrixXd hessian_columns(const ParamSet& params, const Activation& act,
                                const Batch& batch, const Regularizer& reg);

/// Dense Hessian assembled from hvp columns, symmetrized as (H + H^T) / 2.
/// Throws CapacityError above kMaxDenseHessian parameters.
Eigen::MatrixXd exact_hessian(const ParamSet& params, const Activation& act,
                              const Batch& batch, const Regularizer& reg);

/// Number of eigenvalues with |lambda_i| > rel_threshold * max_j |lambda_j|.
std::size_t effective_rank(const Eigen::VectorXd& eigs,
                           double rel_threshold = 1e-2);

}  // namespace lotlab
