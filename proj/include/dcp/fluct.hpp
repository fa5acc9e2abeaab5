#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dcp/macro.hpp"
#include "dcp/model.hpp"

namespace dcp {

/// Coefficients of the fluctuation SDE dX = F(t) X dt + Sigma(t) dW at one
/// time: drift F, diffusion square A = Sigma Sigma^T, and its unique
/// symmetric PSD square root Sigma.
struct DriftDiffusion {
  Eigen::Matrix2d F;
  Eigen::Matrix2d A;
  Eigen::Matrix2d Sigma;
};

/// Symmetric PSD square root of a symmetric 2x2 matrix via
///   Sigma = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)).
/// Eigenvalues in [-1e-12, 0) are clamped to zero (floating-point noise on a
/// PSD-by-construction matrix); anything more negative throws.
Eigen::Matrix2d sqrt_psd_2x2(const Eigen::Matrix2d& a);

/// F(t) and A(t) assembled from (m, v, E[x^2]) at time t of the macroscopic
/// trajectory. F coincides with the Jacobian of the (m, v) field.
DriftDiffusion drift_diffusion_at(const ModelParams& p, const MacroState& macro,
                                  double t);

/// Stationary coefficients at (m*, v*, E_rho*[x^2]).
Eigen::Matrix2d stationary_drift(const ModelParams& p);
Eigen::Matrix2d stationary_diffusion_sq(const ModelParams& p);

/// Solves F C + C F^T + A = 0 (three linear equations in c11, c12, c22).
/// Requires F Hurwitz (tr < 0, det > 0).
Eigen::Matrix2d lyapunov_2x2(const Eigen::Matrix2d& f, const Eigen::Matrix2d& a);

/// Stationary covariance of the fluctuation process; supercritical only.
Eigen::Matrix2d stationary_covariance(const ModelParams& p);

/// Closed-form 2x2 matrix exponential (used by the quadrature oracle and the
/// tests; kept here so both sides of dual-route checks share the primitive
/// they do not solve with).
Eigen::Matrix2d expm_2x2(const Eigen::Matrix2d& m);

struct FluctOptions {
  double T = 1.0;
  double h = 1e-3;
  std::uint64_t seed = 1;
  int replicas = 1;
  int threads = 0;
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();
  bool record_paths = false;
  std::size_t sample_stride = 1;  // stats/paths recorded every stride steps
};

struct FluctEnsemble {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> mean;
  std::vector<Eigen::Matrix2d> cov;  // sample covariance across replicas
  // paths[rep][node], only when record_paths
  std::vector<std::vector<Eigen::Vector2d>> paths;
};

/// Euler-Maruyama ensemble of the fluctuation SDE with coefficients read on
/// the macroscopic trajectory. Replicas use seeds derived from (seed,
/// replica); reductions are thread-count invariant.
FluctEnsemble simulate_fluct(const ModelParams& p, const MacroState& macro,
                             const FluctOptions& opts);

}  // namespace dcp
