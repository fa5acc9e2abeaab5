#pragma once

#include <cmath>
#include <stdexcept>

#include "dcp/model.hpp"
#include "dcp/rng.hpp"

namespace dcp {

/// Supported i.i.d. initial laws on [0,1] for particle systems and for the
/// matching limit objects. The same descriptor provides samples and the
/// aggregate moments (P(x>0), E[x], E[x^2], P(x=0)) the macroscopic system
/// is started from.
struct InitialLaw {
  enum class Kind {
    point_mass,        // delta_{x0}
    uniform,           // uniform on (0,1]
    zero_atom_uniform, // w0 * delta_0 + (1-w0) * uniform(0,1]
    stationary         // rho* of the supplied parameters
  };

  Kind kind = Kind::point_mass;
  double x0 = 1.0;   // point_mass location
  double w0 = 0.0;   // zero_atom_uniform weight

  static InitialLaw point(double x) {
    if (!(x >= 0.0 && x <= 1.0))
      throw std::invalid_argument("InitialLaw: x0 must be in [0,1]");
    return {Kind::point_mass, x, 0.0};
  }
  static InitialLaw uniform01() { return {Kind::uniform, 0.0, 0.0}; }
  static InitialLaw zero_mix(double w) {
    if (!(w >= 0.0 && w <= 1.0))
      throw std::invalid_argument("InitialLaw: mixture weight must be in [0,1]");
    return {Kind::zero_atom_uniform, 0.0, w};
  }
  static InitialLaw stationary_rho() { return {Kind::stationary, 0.0, 0.0}; }

  // Atom mass at zero; the stationary law carries k* = (r+alpha)/lambda.
  double mass_at_zero(const ModelParams& p) const {
    switch (kind) {
      case Kind::point_mass:        return x0 == 0.0 ? 1.0 : 0.0;
      case Kind::uniform:           return 0.0;
      case Kind::zero_atom_uniform: return w0;
      case Kind::stationary:        return require_super(p).critical_ratio();
    }
    return 0.0;
  }

  double mean(const ModelParams& p) const {
    switch (kind) {
      case Kind::point_mass:        return x0;
      case Kind::uniform:           return 0.5;
      case Kind::zero_atom_uniform: return 0.5 * (1.0 - w0);
      case Kind::stationary:        return stationary_mom(require_super(p), 1);
    }
    return 0.0;
  }

  double second_moment(const ModelParams& p) const {
    switch (kind) {
      case Kind::point_mass:        return x0 * x0;
      case Kind::uniform:           return 1.0 / 3.0;
      case Kind::zero_atom_uniform: return (1.0 - w0) / 3.0;
      case Kind::stationary:        return stationary_mom(require_super(p), 2);
    }
    return 0.0;
  }

  double infected_fraction(const ModelParams& p) const {
    return 1.0 - mass_at_zero(p);
  }

  double sample(const ModelParams& p, Rng& rng) const {
    switch (kind) {
      case Kind::point_mass:
        return x0;
      case Kind::uniform:
        return 1.0 - rng.u01();  // (0,1]
      case Kind::zero_atom_uniform:
        return rng.u01() < w0 ? 0.0 : 1.0 - rng.u01();
      case Kind::stationary: {
        const ModelParams& q = require_super(p);
        if (rng.u01() < q.critical_ratio()) return 0.0;
        // continuous part has CDF x^(r/alpha) on (0,1]
        return std::pow(1.0 - rng.u01(), q.alpha / q.r);
      }
    }
    return 0.0;
  }

 private:
  static const ModelParams& require_super(const ModelParams& p) {
    if (!p.supercritical())
      throw std::invalid_argument(
          "InitialLaw: stationary law needs supercritical parameters");
    return p;
  }
  static double stationary_mom(const ModelParams& p, int k) {
    const double m_star = 1.0 - p.critical_ratio();
    return p.r * m_star / (p.r + k * p.alpha);
  }
};

}  // namespace dcp
