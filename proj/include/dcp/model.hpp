#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcp {

/// Rates of the dissipative contact process on the complete graph.
/// lambda: infection rate, alpha: viral-load decay rate, r: recovery rate.
/// All other quantities in the toolkit are derived from this triple.
struct ModelParams {
  double lambda = 0.0;
  double alpha = 0.0;
  double r = 0.0;

  double rho() const { return alpha / lambda; }
  double critical_ratio() const { return (r + alpha) / lambda; }
  bool supercritical() const { return critical_ratio() < 1.0; }
  bool valid() const {
    return std::isfinite(lambda) && std::isfinite(alpha) && std::isfinite(r) &&
           lambda > 0.0 && alpha > 0.0 && r > 0.0;
  }
};

struct FixedPoint {
  enum class Kind { origin, endemic };
  Kind kind = Kind::origin;
  double m = 0.0;
  double v = 0.0;
};

/// Endemic equilibrium (m*, v*); exists iff (r+alpha)/lambda < 1.
inline FixedPoint endemic_point(const ModelParams& p) {
  if (!p.supercritical())
    throw std::invalid_argument("endemic_point: subcritical parameters");
  const double m = 1.0 - p.critical_ratio();
  const double v = p.r / (p.r + p.alpha) * m;
  return {FixedPoint::Kind::endemic, m, v};
}

inline std::vector<FixedPoint> fixed_points(const ModelParams& p) {
  std::vector<FixedPoint> out{{FixedPoint::Kind::origin, 0.0, 0.0}};
  if (p.supercritical()) out.push_back(endemic_point(p));
  return out;
}

/// Right-hand side of the macroscopic system
///   m' = lambda (1-m) v - r m
///   v' = -alpha v + lambda (1-m) v - r v
inline Eigen::Vector2d mv_rhs(const ModelParams& p, double m, double v) {
  return {p.lambda * (1.0 - m) * v - p.r * m,
          (p.lambda * (1.0 - m) - p.r - p.alpha) * v};
}

inline Eigen::Matrix2d jacobian(const ModelParams& p, double m, double v) {
  Eigen::Matrix2d j;
  j << -p.lambda * v - p.r, p.lambda * (1.0 - m),
       -p.lambda * v,       p.lambda * (1.0 - m) - (p.r + p.alpha);
  return j;
}

enum class StabilityClass { origin_stable, stable_node, stable_spiral };

inline std::string to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::origin_stable: return "origin-stable";
    case StabilityClass::stable_node:   return "stable-node";
    case StabilityClass::stable_spiral: return "stable-spiral";
  }
  return "?";
}

/// Node/spiral thresholds for the endemic point:
///   lambda_-,+ = (2 (r+alpha)^2 / r) (1 -+ sqrt(alpha/(r+alpha)))
/// Always r+alpha < lambda_- < lambda_+.
inline std::pair<double, double> node_spiral_thresholds(const ModelParams& p) {
  const double c = p.r + p.alpha;
  const double q = std::sqrt(p.alpha / c);
  const double base = 2.0 * c * c / p.r;
  return {base * (1.0 - q), base * (1.0 + q)};
}

struct StabilityReport {
  Eigen::Matrix2d jac;                 // at the relevant fixed point
  std::complex<double> eig1, eig2;     // quadratic-formula eigenvalues
  StabilityClass cls = StabilityClass::origin_stable;
  double lambda_minus = 0.0;
  double lambda_plus = 0.0;
};

/// Linear stability at the relevant fixed point. Subcritical parameters give
/// the origin's Jacobian; supercritical ones the endemic Jacobian, classified
/// as node or spiral by comparing lambda against the thresholds.
inline StabilityReport stability(const ModelParams& p) {
  StabilityReport rep;
  std::tie(rep.lambda_minus, rep.lambda_plus) = node_spiral_thresholds(p);
  if (!p.supercritical()) {
    rep.jac = jacobian(p, 0.0, 0.0);
    rep.cls = StabilityClass::origin_stable;
  } else {
    const FixedPoint fp = endemic_point(p);
    rep.jac = jacobian(p, fp.m, fp.v);
    rep.cls = (rep.lambda_minus < p.lambda && p.lambda < rep.lambda_plus)
                  ? StabilityClass::stable_spiral
                  : StabilityClass::stable_node;
  }
  const double tr = rep.jac.trace();
  const double det = rep.jac.determinant();
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(tr * tr - 4.0 * det, 0.0));
  rep.eig1 = 0.5 * (tr + disc);
  rep.eig2 = 0.5 * (tr - disc);
  return rep;
}

/// Propagation-of-chaos constants for horizon T. K1 is the (unknown) best
/// L^1 Burkholder-Davis-Gundy constant, exposed as a knob. The exponentials
/// overflow quickly; +inf is a valid, informational result.
struct ChaosBounds {
  double a_T = 0.0;
  double b_T = 0.0;
  double c_T = 0.0;
  double k1 = 1.0;
};

inline ChaosBounds chaos_bounds(const ModelParams& p, double T,
                                double k1 = 1.0) {
  if (!(T >= 0.0) || !(k1 > 0.0))
    throw std::invalid_argument("chaos_bounds: need T >= 0 and K1 > 0");
  ChaosBounds b;
  b.k1 = k1;
  const double e1 = std::exp((p.alpha + 3.0 * p.lambda + 2.0 * p.r) * T);
  const double e2 = std::exp((2.0 * p.alpha + p.r) * T);
  b.a_T = p.lambda * T * e1;
  b.b_T = (p.lambda * T + 1.0 + k1 * std::sqrt(T * (p.lambda + p.r))) * e1;
  b.c_T = 2.0 * b.a_T +
          (1.0 + p.lambda * T +
           k1 * (3.0 * std::sqrt(p.lambda) + std::sqrt(p.r)) * std::sqrt(T)) *
              e2;
  return b;
}

}  // namespace dcp
