#include "dcp/macro.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "dcp/quadrature.hpp"

namespace dcp {

namespace {

using Vec4 = Eigen::Vector4d;

Vec4 macro_rhs(const ModelParams& p, const Vec4& y) {
  const double m = y[0], v = y[1], x2 = y[2], k = y[3];
  const double gain = p.lambda * (1.0 - m) * v;
  Vec4 f;
  f[0] = gain - p.r * m;
  f[1] = (p.lambda * (1.0 - m) - p.r - p.alpha) * v;
  f[2] = -(2.0 * p.alpha + p.r) * x2 + gain;
  f[3] = p.r * (1.0 - k) - p.lambda * v * k;
  return f;
}

constexpr double kOrderTol = 1e-6;

bool ordering_ok(const Vec4& y) {
  const double m = y[0], v = y[1], x2 = y[2], k = y[3];
  return m <= 1.0 + kOrderTol && m >= -kOrderTol && v <= m + kOrderTol &&
         v >= -kOrderTol && x2 <= v + kOrderTol && x2 >= -kOrderTol &&
         k >= -kOrderTol && k <= 1.0 + kOrderTol;
}

// One integration pass; nodes and stage-1 derivatives out.
void rk4_pass(const ModelParams& p, Vec4 y, double h, std::size_t steps,
              std::vector<Vec4>& nodes, std::vector<Vec4>& derivs) {
  nodes.reserve(steps + 1);
  derivs.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    const Vec4 k1 = macro_rhs(p, y);
    nodes.push_back(y);
    derivs.push_back(k1);
    if (i == steps) break;
    const Vec4 k2 = macro_rhs(p, y + 0.5 * h * k1);
    const Vec4 k3 = macro_rhs(p, y + 0.5 * h * k2);
    const Vec4 k4 = macro_rhs(p, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!ordering_ok(y))
      throw std::runtime_error(
          "integrate_macro: ordering invariant violated, refine the step");
  }
}

Vec4 rk4_endpoint(const ModelParams& p, Vec4 y, double h, std::size_t steps) {
  for (std::size_t i = 0; i < steps; ++i) {
    const Vec4 k1 = macro_rhs(p, y);
    const Vec4 k2 = macro_rhs(p, y + 0.5 * h * k1);
    const Vec4 k3 = macro_rhs(p, y + 0.5 * h * k2);
    const Vec4 k4 = macro_rhs(p, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

}  // namespace

MacroState::Vec4 MacroState::at(double t) const {
  if (y_.size() == 1) return y_[0];
  const double t_last = t_end();
  if (t <= t0_) return y_.front();
  if (t >= t_last) return y_.back();
  const double s = (t - t0_) / h_;
  std::size_t i = static_cast<std::size_t>(s);
  if (i >= y_.size() - 1) i = y_.size() - 2;
  const double th = s - static_cast<double>(i);  // in [0,1)
  const double th2 = th * th;
  const double omt = 1.0 - th;
  const double h00 = omt * omt * (1.0 + 2.0 * th);
  const double h10 = th * omt * omt;
  const double h01 = th2 * (3.0 - 2.0 * th);
  const double h11 = -th2 * omt;
  return h00 * y_[i] + h01 * y_[i + 1] + h_ * (h10 * f_[i] + h11 * f_[i + 1]);
}

MacroState integrate_macro(const ModelParams& p, const MacroInit& init,
                           double T, double h, bool richardson) {
  // lambda = 0 is allowed here: the coupling experiment uses it as the
  // fully decoupled edge case.
  if (!(std::isfinite(p.lambda) && p.lambda >= 0.0 && std::isfinite(p.alpha) &&
        p.alpha > 0.0 && std::isfinite(p.r) && p.r > 0.0))
    throw std::invalid_argument("integrate_macro: bad parameters");
  if (!(T >= 0.0) || !(h > 0.0))
    throw std::invalid_argument("integrate_macro: need T >= 0 and h > 0");
  Vec4 y0(init.m0, init.v0, init.x2_0, init.k0);
  if (!ordering_ok(y0))
    throw std::invalid_argument(
        "integrate_macro: initial values must satisfy 0<=x2<=v<=m<=1, 0<=k<=1");

  std::size_t steps =
      T == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(T / h - 1e-9));
  const double h_eff = steps == 0 ? h : T / static_cast<double>(steps);

  std::vector<Vec4> nodes, derivs;
  rk4_pass(p, y0, h_eff, steps, nodes, derivs);

  double rich = 0.0;
  if (richardson && steps > 0) {
    const Vec4 fine = rk4_endpoint(p, y0, 0.5 * h_eff, 2 * steps);
    rich = (fine - nodes.back()).cwiseAbs().maxCoeff();
  }
  return MacroState(0.0, h_eff, std::move(nodes), std::move(derivs), rich);
}

double stationary_moment(const ModelParams& p, int k) {
  if (!p.supercritical())
    throw std::invalid_argument("stationary_moment: subcritical parameters");
  if (k < 1) throw std::invalid_argument("stationary_moment: order must be >= 1");
  const double m_star = 1.0 - p.critical_ratio();
  return p.r * m_star / (p.r + static_cast<double>(k) * p.alpha);
}

StationaryLaw stationary_law(const ModelParams& p) {
  if (!p.supercritical())
    throw std::invalid_argument("stationary_law: subcritical parameters");
  StationaryLaw law;
  law.atom_zero = p.critical_ratio();
  law.coeff = p.r / p.alpha * (1.0 - p.critical_ratio());
  law.exponent = (p.r - p.alpha) / p.alpha;
  const double v_star = endemic_point(p).v;
  law.k_star = p.r / (p.lambda * v_star + p.r);
  // k* = r/(lambda v* + r) and (r+alpha)/lambda agree in exact arithmetic
  if (std::abs(law.k_star - law.atom_zero) > 1e-12)
    throw std::logic_error("stationary_law: k* identity violated");
  return law;
}

double LimitLaw::total_mass(double tol) const {
  double mass = 0.0;
  for (const auto& a : atoms) mass += a.mass;
  const double alpha = params.alpha;
  // g integral in s-coordinates (x = e^{-alpha s}) to tame the x^((r-a)/a)
  // behaviour near the lower support end.
  if (g_lower < 1.0) {
    const double s_max = -std::log(g_lower) / alpha;
    mass += adaptive_simpson(
        [&](double s) {
          const double x = std::exp(-alpha * s);
          return g(x) * alpha * x;
        },
        0.0, s_max, tol);
  }
  if (has_survivor_density && survivor_upper > 0.0) {
    const double s_lo = -std::log(survivor_upper) / alpha;
    const double s_hi = s_lo + 60.0 / params.r;  // survivor tail ~ e^{-r s}
    mass += adaptive_simpson(
        [&](double s) {
          const double x = std::exp(-alpha * s);
          return survivor(x) * alpha * x;
        },
        s_lo, s_hi, tol);
  }
  return mass;
}

LimitLaw limit_law(const ModelParams& p, const InitialLaw& mu0, double t,
                   double h) {
  if (!(t >= 0.0)) throw std::invalid_argument("limit_law: need t >= 0");
  LimitLaw law;
  law.t = t;
  law.params = p;
  law.g_lower = std::exp(-p.alpha * t);

  auto macro = std::make_shared<MacroState>(
      integrate_macro(p, macro_init_from(mu0, p), t, h));
  const double k_t = macro->k_at(t);
  law.atoms.push_back({0.0, k_t});

  const double decay = std::exp(-p.r * t);
  const double k0 = mu0.mass_at_zero(p);
  switch (mu0.kind) {
    case InitialLaw::Kind::point_mass:
      if (mu0.x0 > 0.0)
        law.atoms.push_back({mu0.x0 * law.g_lower, decay});
      break;
    case InitialLaw::Kind::uniform:
    case InitialLaw::Kind::zero_atom_uniform: {
      // pushforward of the uniform part under x -> x e^{-alpha t}
      const double weight = (1.0 - k0) * decay * std::exp(p.alpha * t);
      law.has_survivor_density = weight > 0.0;
      law.survivor_upper = law.g_lower;
      law.survivor = [weight](double) { return weight; };
      break;
    }
    case InitialLaw::Kind::stationary: {
      const StationaryLaw st = stationary_law(p);
      const double ea = std::exp(p.alpha * t);
      law.has_survivor_density = true;
      law.survivor_upper = law.g_lower;
      law.survivor = [st, decay, ea](double x) {
        return decay * ea * st.pdf(x * ea);
      };
      break;
    }
  }

  const double pref = p.lambda / p.alpha;
  const double expo = (p.r - p.alpha) / p.alpha;
  const double alpha = p.alpha;
  law.g = [macro, pref, expo, alpha, t](double x) {
    const double s = t + std::log(x) / alpha;  // retarded time in [0, t]
    const auto y = macro->at(s);
    return pref * y[3] * y[1] * std::pow(x, expo);
  };
  return law;
}

}  // namespace dcp
