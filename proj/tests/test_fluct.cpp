#include <doctest.h>

#include <cmath>

#include "dcp/fluct.hpp"
#include "dcp/macro.hpp"
#include "dcp/quadrature.hpp"
#include "dcp/rng.hpp"

using namespace dcp;

namespace {

ModelParams random_supercritical(Rng& rng) {
  const double r = 0.3 + 2.7 * rng.u01();
  const double alpha = 0.3 + 2.7 * rng.u01();
  const double ratio = 0.1 + 0.8 * rng.u01();
  return {(r + alpha) / ratio, alpha, r};
}

// entrywise adaptive quadrature of int_0^inf e^{Fs} A e^{F^T s} ds
Eigen::Matrix2d lyapunov_quadrature(const Eigen::Matrix2d& f,
                                    const Eigen::Matrix2d& a, double tol) {
  const double rate = -0.5 * f.trace();  // decay of |e^{Fs}|^2 for 2x2 Hurwitz
  const double s_max = 50.0 / rate;
  Eigen::Matrix2d c;
  for (int i = 0; i < 2; ++i)
    for (int j = i; j < 2; ++j) {
      c(i, j) = adaptive_simpson(
          [&](double s) {
            const Eigen::Matrix2d e = expm_2x2(s * f);
            return (e * a * e.transpose())(i, j);
          },
          0.0, s_max, tol);
      c(j, i) = c(i, j);
    }
  return c;
}

}  // namespace

TEST_SUITE("fluct") {

TEST_CASE("coefficients at the null state") {
  const ModelParams p{4.0, 1.0, 1.0};
  const MacroState macro = integrate_macro(p, {0, 0, 0, 1.0}, 1.0);
  const DriftDiffusion dd = drift_diffusion_at(p, macro, 0.5);
  CHECK(dd.A.cwiseAbs().maxCoeff() == 0.0);
  CHECK(dd.Sigma.cwiseAbs().maxCoeff() == 0.0);
  // F = [[-r, lambda], [0, lambda - r - alpha]]
  CHECK(dd.F(0, 0) == doctest::Approx(-1.0));
  CHECK(dd.F(0, 1) == doctest::Approx(4.0));
  CHECK(dd.F(1, 0) == doctest::Approx(0.0));
  CHECK(dd.F(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("stationary drift matches the hand value and the Jacobian") {
  const ModelParams p{100.0, 70.0, 5.0};
  const Eigen::Matrix2d f = stationary_drift(p);
  CHECK(f(0, 0) == doctest::Approx(-20.0 / 3.0).epsilon(1e-13));
  CHECK(f(0, 1) == doctest::Approx(75.0).epsilon(1e-13));
  CHECK(f(1, 0) == doctest::Approx(-5.0 / 3.0).epsilon(1e-13));
  CHECK(f(1, 1) == doctest::Approx(0.0));
  const FixedPoint fp = endemic_point(p);
  CHECK((f - jacobian(p, fp.m, fp.v)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("symmetric square root over random PSD matrices") {
  Rng rng(41);
  for (int i = 0; i < 10000; ++i) {
    Eigen::Matrix2d b;
    b << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    const Eigen::Matrix2d a = b * b.transpose();
    const Eigen::Matrix2d s = sqrt_psd_2x2(a);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s * s - a).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, a.norm()));
  }
  SUBCASE("clearly indefinite input is reported") {
    Eigen::Matrix2d bad;
    bad << 1.0, 0.0, 0.0, -1e-6;
    CHECK_THROWS_AS(sqrt_psd_2x2(bad), std::runtime_error);
  }
  SUBCASE("zero matrix maps to zero") {
    CHECK(sqrt_psd_2x2(Eigen::Matrix2d::Zero()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("lyapunov solver") {
  SUBCASE("A = 0 gives C = 0") {
    const Eigen::Matrix2d c =
        lyapunov_2x2(-Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Zero());
    CHECK(c.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("scalar OU balance: F = -I, A = 2I gives C = I") {
    const Eigen::Matrix2d c = lyapunov_2x2(-Eigen::Matrix2d::Identity(),
                                           2.0 * Eigen::Matrix2d::Identity());
    CHECK((c - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("non-Hurwitz drift is rejected") {
    CHECK_THROWS_AS(
        lyapunov_2x2(Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()),
        std::invalid_argument);
  }
  SUBCASE("reference parameters: residual and quadrature oracle") {
    const ModelParams p{100.0, 70.0, 5.0};
    const Eigen::Matrix2d f = stationary_drift(p);
    const Eigen::Matrix2d a = stationary_diffusion_sq(p);
    const Eigen::Matrix2d c = stationary_covariance(p);
    CHECK((f * c + c * f.transpose() + a).cwiseAbs().maxCoeff() <= 1e-10);
    const Eigen::Matrix2d oracle = lyapunov_quadrature(f, a, 1e-9);
    CHECK((c - oracle).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("subcritical parameters are rejected") {
    CHECK_THROWS_AS(stationary_covariance({1.0, 1.0, 1.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("2x2 matrix exponential") {
  CHECK((expm_2x2(Eigen::Matrix2d::Zero()) - Eigen::Matrix2d::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  SUBCASE("diagonal case") {
    Eigen::Matrix2d d;
    d << 0.3, 0.0, 0.0, -1.2;
    const Eigen::Matrix2d e = expm_2x2(d);
    CHECK(e(0, 0) == doctest::Approx(std::exp(0.3)).epsilon(1e-14));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-1.2)).epsilon(1e-14));
    CHECK(e(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("rotation case") {
    Eigen::Matrix2d j;
    j << 0.0, -1.0, 1.0, 0.0;
    const Eigen::Matrix2d e = expm_2x2(1.3 * j);
    CHECK(e(0, 0) == doctest::Approx(std::cos(1.3)).epsilon(1e-14));
    CHECK(e(1, 0) == doctest::Approx(std::sin(1.3)).epsilon(1e-14));
  }
  SUBCASE("scaling-squaring series oracle on random matrices") {
    Rng rng(43);
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::Matrix2d m;
      m << rng.normal(), rng.normal(), rng.normal(), rng.normal();
      // Taylor with argument scaled by 2^-10, squared back
      Eigen::Matrix2d small = m / 1024.0;
      Eigen::Matrix2d acc = Eigen::Matrix2d::Identity();
      Eigen::Matrix2d term = Eigen::Matrix2d::Identity();
      for (int k = 1; k <= 12; ++k) {
        term = term * small / static_cast<double>(k);
        acc += term;
      }
      for (int k = 0; k < 10; ++k) acc = acc * acc;
      CHECK((expm_2x2(m) - acc).cwiseAbs().maxCoeff() <
            1e-11 * std::max(1.0, acc.norm()));
    }
  }
}

TEST_CASE("noise-free ensemble follows the matrix ODE") {
  const ModelParams p{4.0, 1.0, 1.0};
  // null-state trajectory: Sigma = 0 and F is constant
  const MacroState macro = integrate_macro(p, {0, 0, 0, 1.0}, 1.0);
  FluctOptions opts;
  opts.T = 1.0;
  opts.seed = 44;
  opts.replicas = 1;
  opts.record_paths = true;
  opts.x0 = Eigen::Vector2d(0.7, -0.3);

  SUBCASE("zero start stays zero") {
    FluctOptions z = opts;
    z.x0 = Eigen::Vector2d::Zero();
    const FluctEnsemble ens = simulate_fluct(p, macro, z);
    for (const auto& x : ens.paths[0]) CHECK(x.cwiseAbs().maxCoeff() == 0.0);
  }

  const Eigen::Matrix2d f = jacobian(p, 0.0, 0.0);
  const Eigen::Vector2d exact = expm_2x2(f * opts.T) * opts.x0;

  opts.h = 1e-3;
  const Eigen::Vector2d e1 =
      simulate_fluct(p, macro, opts).paths[0].back() - exact;
  opts.h = 1e-4;
  const Eigen::Vector2d e2 =
      simulate_fluct(p, macro, opts).paths[0].back() - exact;
  CHECK(e1.norm() < 0.01);
  // first-order convergence: tenfold step reduction shrinks the error ~10x
  CHECK(e2.norm() < 0.2 * e1.norm());
}

TEST_CASE("frozen stationary coefficients: ensemble covariance vs Lyapunov") {
  const ModelParams p{100.0, 70.0, 5.0};
  const FixedPoint fp = endemic_point(p);
  const MacroState macro = integrate_macro(
      p, {fp.m, fp.v, stationary_moment(p, 2), p.critical_ratio()}, 10.0);
  FluctOptions opts;
  opts.T = 10.0;
  opts.h = 1e-3;
  opts.seed = 45;
  opts.replicas = 10000;
  opts.sample_stride = 1000;
  const FluctEnsemble ens = simulate_fluct(p, macro, opts);
  const Eigen::Matrix2d c_target = stationary_covariance(p);
  const Eigen::Matrix2d c_hat = ens.cov.back();
  CHECK((c_hat - c_target).norm() / c_target.norm() < 0.05);
}

TEST_CASE("linear SDE Gaussianity: skewness of xi(T) near zero") {
  const ModelParams p{4.0, 1.0, 1.0};
  const FixedPoint fp = endemic_point(p);
  const MacroState macro = integrate_macro(
      p, {fp.m, fp.v, stationary_moment(p, 2), p.critical_ratio()}, 4.0);
  FluctOptions opts;
  opts.T = 4.0;
  opts.h = 1e-3;
  opts.seed = 46;
  opts.replicas = 10000;
  opts.record_paths = true;
  opts.sample_stride = 4000;
  const FluctEnsemble ens = simulate_fluct(p, macro, opts);
  double m1 = 0, m2 = 0, m3 = 0;
  const double n = static_cast<double>(opts.replicas);
  for (const auto& path : ens.paths) m1 += path.back()[0];
  m1 /= n;
  for (const auto& path : ens.paths) {
    const double d = path.back()[0] - m1;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  const double skew = m3 / std::pow(m2, 1.5);
  const double se = std::sqrt(6.0 / n);
  CHECK(std::abs(skew) < 4.0 * se);
}

TEST_CASE("drift-diffusion requires PSD A along ordered trajectories") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = random_supercritical(rng);
    const MacroState macro =
        integrate_macro(p, macro_init_from(InitialLaw::uniform01(), p), 2.0);
    for (double t : {0.0, 0.5, 1.0, 2.0}) {
      const DriftDiffusion dd = drift_diffusion_at(p, macro, t);
      CHECK((dd.Sigma * dd.Sigma - dd.A).cwiseAbs().maxCoeff() <=
            1e-10 * std::max(1.0, dd.A.norm()));
      CHECK(dd.Sigma(0, 1) == dd.Sigma(1, 0));
    }
  }
}

}  // TEST_SUITE
