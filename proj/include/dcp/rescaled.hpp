#pragma once

#include <cstdint>
#include <vector>

#include "dcp/micro.hpp"
#include "dcp/model.hpp"

namespace dcp {

/// Rescaled fluctuations extracted from a particle run with alpha = rho
/// lambda_N: time is contracted by sqrt(lambda_N) and
///   xi_hat  = sqrt(N) (m_N - m*) / lambda_N^{1/4}
///   eta_hat = lambda_N^{1/4} sqrt(N) (v_N - v*).
struct RescaledPath {
  std::vector<double> t;  // rescaled times
  std::vector<double> xi_hat;
  std::vector<double> eta_hat;
  double lambda_n = 0.0;
  double alpha_n = 0.0;
  std::size_t n = 0;
  bool scaling_healthy = true;  // sqrt(lambda_N) <= log n
  std::uint64_t seed = 0;
  std::uint64_t events = 0;
};

/// Applies the rescaling transform to aggregates sampled on a rescaled grid.
RescaledPath rescale_trajectory(const TrajectorySample& traj, double lambda_n,
                                double rho, double r, std::size_t n);

/// Runs the exact simulator with (lambda_N, rho lambda_N, r) from the
/// stationary law on physical horizon T/sqrt(lambda_N), sampled every
/// dt (rescaled units).
RescaledPath rescaled_from_micro(double r, double rho, double lambda_n,
                                 std::size_t n, double T, double dt,
                                 std::uint64_t seed);

struct OscillatorOptions {
  double r = 1.0;
  double rho = 0.5;
  double T = 10.0;
  double h = 1e-3;
  std::uint64_t seed = 1;
  int replicas = 1;
  int threads = 0;
  double noise_scale = 1.0;  // multiplies r(1-rho); 0 gives the pure oscillator
  double xi0 = 0.0;
  double eta0 = 0.0;
  bool record_paths = false;
  std::size_t sample_stride = 1;
};

struct OscillatorMoments {
  std::vector<double> t, xx, xe, ee;  // E[xi^2], E[xi eta], E[eta^2]
};

struct OscillatorEnsemble {
  std::vector<double> t;
  OscillatorMoments ensemble;                 // across-replica moments
  std::vector<std::vector<double>> xi_paths;  // only when record_paths
  std::vector<std::vector<double>> eta_paths;
};

/// Euler-Maruyama ensemble of the random harmonic oscillator
///   d xi  = rho eta dt
///   d eta = -(r/rho)(1-rho) xi dt + r(1-rho) dW.
OscillatorEnsemble simulate_oscillator(const OscillatorOptions& opts);

/// Exact second moments of the oscillator via the closed ODE system
///   xx' = 2 rho xe,  xe' = rho ee - (r/rho)(1-rho) xx,
///   ee' = -2 (r/rho)(1-rho) xe + r^2 (1-rho)^2,
/// integrated with RK4 at step h from (0, 0, 0).
OscillatorMoments oscillator_moment_ode(double r, double rho, double T,
                                        double h = 1e-4);

struct ConvergenceEntry {
  double lambda_n = 0.0;
  std::size_t n = 0;
  double var_xi_hat = 0.0;   // across replicas at time T
  double oscillator_var = 0.0;
  double rel_gap = 0.0;
  bool scaling_healthy = true;
};

struct ConvergenceReport {
  double T = 0.0;
  std::vector<ConvergenceEntry> entries;
  bool gaps_non_increasing = false;  // up to one inversion
};

/// Compares Var(xi_hat(T)) along a (lambda_N, n) ladder against the
/// oscillator moment-ODE target.
ConvergenceReport convergence_study(double r, double rho,
                                    const std::vector<std::pair<double, std::size_t>>& ladder,
                                    double T, int replicas, std::uint64_t seed,
                                    int threads = 0);

}  // namespace dcp
