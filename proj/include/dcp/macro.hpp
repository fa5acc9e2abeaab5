#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "dcp/initial_law.hpp"
#include "dcp/model.hpp"

namespace dcp {

struct MacroInit {
  double m0 = 0.0;
  double v0 = 0.0;
  double x2_0 = 0.0;
  double k0 = 1.0;
};

/// Trajectory of (m, v, E[x^2], k) on a uniform grid with cubic-Hermite dense
/// output (the stage-1 derivative is stored at every node, so interpolation
/// costs no extra right-hand-side evaluations).
class MacroState {
 public:
  using Vec4 = Eigen::Vector4d;

  MacroState() = default;
  MacroState(double t0, double h, std::vector<Vec4> y, std::vector<Vec4> f,
             double richardson_error)
      : t0_(t0), h_(h), y_(std::move(y)), f_(std::move(f)),
        richardson_error_(richardson_error) {}

  double t_begin() const { return t0_; }
  double t_end() const { return t0_ + h_ * static_cast<double>(y_.size() - 1); }
  double step() const { return h_; }
  std::size_t size() const { return y_.size(); }
  double time_at(std::size_t i) const { return t0_ + h_ * static_cast<double>(i); }
  const Vec4& node(std::size_t i) const { return y_[i]; }

  /// Dense output; t is clamped to the integration interval.
  Vec4 at(double t) const;

  double m_at(double t) const { return at(t)[0]; }
  double v_at(double t) const { return at(t)[1]; }
  double x2_at(double t) const { return at(t)[2]; }
  double k_at(double t) const { return at(t)[3]; }

  /// Endpoint discrepancy of the half-step Richardson rerun (0 if skipped).
  double richardson_error() const { return richardson_error_; }

 private:
  double t0_ = 0.0;
  double h_ = 1.0;
  std::vector<Vec4> y_;
  std::vector<Vec4> f_;
  double richardson_error_ = 0.0;
};

/// Classical fixed-step RK4 for the coupled system
///   m'  = lambda (1-m) v - r m
///   v'  = (lambda (1-m) - r - alpha) v
///   x2' = -(2 alpha + r) x2 + lambda (1-m) v
///   k'  = r (1-k) - lambda v k
/// Throws if the ordering 0 <= x2 <= v <= m <= 1 (or k in [0,1]) breaks by
/// more than 1e-6, which signals a too-large step.
MacroState integrate_macro(const ModelParams& p, const MacroInit& init,
                           double T, double h = 1e-3, bool richardson = true);

inline MacroInit macro_init_from(const InitialLaw& mu0, const ModelParams& p) {
  return {mu0.infected_fraction(p), mu0.mean(p), mu0.second_moment(p),
          mu0.mass_at_zero(p)};
}

/// k-th moment of rho*: r (1 - (r+alpha)/lambda) / (r + k alpha).
double stationary_moment(const ModelParams& p, int k);

/// The stationary law rho* = k* delta_0 + c x^((r-alpha)/alpha) dx on (0,1].
struct StationaryLaw {
  double atom_zero = 0.0;   // k* = (r+alpha)/lambda
  double coeff = 0.0;       // (r/alpha)(1 - (r+alpha)/lambda)
  double exponent = 0.0;    // (r-alpha)/alpha
  double k_star = 0.0;      // r/(lambda v* + r), equals atom_zero

  double pdf(double x) const { return coeff * std::pow(x, exponent); }
  /// CDF of the continuous part conditioned on x > 0: x^(r/alpha).
  double cdf_positive(const ModelParams& p, double x) const {
    return std::pow(x, p.r / p.alpha);
  }
};

StationaryLaw stationary_law(const ModelParams& p);

struct LimitAtom {
  double x = 0.0;
  double mass = 0.0;
};

/// Marginal law of the limit process at time t: atoms (at zero, plus the
/// traveling atom for a point start), the density g_t on (e^{-alpha t}, 1],
/// and, for a continuous initial law, the not-yet-recovered pushforward
/// density on (0, e^{-alpha t}].
struct LimitLaw {
  double t = 0.0;
  ModelParams params;
  std::vector<LimitAtom> atoms;
  double g_lower = 1.0;  // e^{-alpha t}; g is supported on (g_lower, 1]
  std::function<double(double)> g;
  bool has_survivor_density = false;
  double survivor_upper = 0.0;  // support (0, survivor_upper]
  std::function<double(double)> survivor;

  /// Total mass (atoms + quadrature of both density pieces).
  double total_mass(double tol = 1e-10) const;
};

/// Assembles the law at time t for one of the supported initial laws,
/// integrating (m, v, x2, k) internally with step h.
LimitLaw limit_law(const ModelParams& p, const InitialLaw& mu0, double t,
                   double h = 1e-3);

}  // namespace dcp
