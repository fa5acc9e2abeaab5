#include "dcp/rescaled.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "dcp/parallel.hpp"
#include "dcp/rng.hpp"

namespace dcp {

RescaledPath rescale_trajectory(const TrajectorySample& traj, double lambda_n,
                                double rho, double r, std::size_t n) {
  const ModelParams p{lambda_n, rho * lambda_n, r};
  const FixedPoint fp = endemic_point(p);
  const double root_l = std::sqrt(lambda_n);
  const double quarter = std::sqrt(root_l);  // lambda_N^{1/4}
  const double root_n = std::sqrt(static_cast<double>(n));
  RescaledPath out;
  out.lambda_n = lambda_n;
  out.alpha_n = p.alpha;
  out.n = n;
  out.seed = traj.seed;
  out.events = traj.events;
  out.scaling_healthy = root_l <= std::log(static_cast<double>(n));
  out.t.reserve(traj.t.size());
  out.xi_hat.reserve(traj.t.size());
  out.eta_hat.reserve(traj.t.size());
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    out.t.push_back(traj.t[i] * root_l);
    out.xi_hat.push_back(root_n * (traj.m[i] - fp.m) / quarter);
    out.eta_hat.push_back(quarter * root_n * (traj.v[i] - fp.v));
  }
  return out;
}

RescaledPath rescaled_from_micro(double r, double rho, double lambda_n,
                                 std::size_t n, double T, double dt,
                                 std::uint64_t seed) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("rescaled_from_micro: need rho in (0,1)");
  const ModelParams p{lambda_n, rho * lambda_n, r};
  if (!p.supercritical())
    throw std::invalid_argument("rescaled_from_micro: (r+alpha)/lambda >= 1");
  const double root_l = std::sqrt(lambda_n);
  const double t_phys = T / root_l;
  const std::vector<double> grid = uniform_grid(0.0, t_phys, dt / root_l);
  ParticleSystem sys(p, n, InitialLaw::stationary_rho(), seed);
  Rng rng(derive_stream(seed, 0x5ca1ed));
  const TrajectorySample traj = run(sys, t_phys, grid, SimMode::exact, rng);
  return rescale_trajectory(traj, lambda_n, rho, r, n);
}

OscillatorMoments oscillator_moment_ode(double r, double rho, double T,
                                        double h) {
  const double k = r / rho * (1.0 - rho);
  const double q = r * (1.0 - rho);
  const std::size_t steps =
      static_cast<std::size_t>(std::ceil(T / h - 1e-9));
  const double hs = T / static_cast<double>(steps);
  auto rhs = [&](const std::array<double, 3>& y) {
    return std::array<double, 3>{2.0 * rho * y[1],
                                 rho * y[2] - k * y[0],
                                 -2.0 * k * y[1] + q * q};
  };
  auto axpy = [](const std::array<double, 3>& y, double c,
                 const std::array<double, 3>& d) {
    return std::array<double, 3>{y[0] + c * d[0], y[1] + c * d[1],
                                 y[2] + c * d[2]};
  };
  OscillatorMoments out;
  out.t.reserve(steps + 1);
  out.xx.reserve(steps + 1);
  out.xe.reserve(steps + 1);
  out.ee.reserve(steps + 1);
  std::array<double, 3> y{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i <= steps; ++i) {
    out.t.push_back(hs * static_cast<double>(i));
    out.xx.push_back(y[0]);
    out.xe.push_back(y[1]);
    out.ee.push_back(y[2]);
    if (i == steps) break;
    const auto k1 = rhs(y);
    const auto k2 = rhs(axpy(y, 0.5 * hs, k1));
    const auto k3 = rhs(axpy(y, 0.5 * hs, k2));
    const auto k4 = rhs(axpy(y, hs, k3));
    for (int c = 0; c < 3; ++c)
      y[c] += hs / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
  }
  return out;
}

OscillatorEnsemble simulate_oscillator(const OscillatorOptions& opts) {
  if (!(opts.h > 0.0) || !(opts.T > 0.0) || opts.replicas < 1)
    throw std::invalid_argument("simulate_oscillator: bad options");
  const double k = opts.r / opts.rho * (1.0 - opts.rho);
  const double sig = opts.noise_scale * opts.r * (1.0 - opts.rho);
  const std::size_t steps =
      static_cast<std::size_t>(std::ceil(opts.T / opts.h - 1e-9));
  const double h = opts.T / static_cast<double>(steps);
  const double sqh = std::sqrt(h);
  const std::size_t stride = std::max<std::size_t>(1, opts.sample_stride);

  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i <= steps; i += stride) nodes.push_back(i);
  if (nodes.back() != steps) nodes.push_back(steps);
  const std::size_t nn = nodes.size();

  OscillatorEnsemble out;
  out.t.resize(nn);
  for (std::size_t j = 0; j < nn; ++j)
    out.t[j] = h * static_cast<double>(nodes[j]);

  constexpr int kChunk = 256;
  const int chunks = (opts.replicas + kChunk - 1) / kChunk;
  struct Partial {
    std::vector<double> xx, xe, ee;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(chunks));
  if (opts.record_paths) {
    out.xi_paths.assign(static_cast<std::size_t>(opts.replicas), {});
    out.eta_paths.assign(static_cast<std::size_t>(opts.replicas), {});
  }

  parallel_for_index(chunks, opts.threads, [&](int ci) {
    auto& pt = partial[static_cast<std::size_t>(ci)];
    pt.xx.assign(nn, 0.0);
    pt.xe.assign(nn, 0.0);
    pt.ee.assign(nn, 0.0);
    const int lo = ci * kChunk;
    const int hi = std::min(opts.replicas, lo + kChunk);
    for (int rep = lo; rep < hi; ++rep) {
      Rng rng(derive_stream(opts.seed, 0x05c1, static_cast<std::uint64_t>(rep)));
      double xi = opts.xi0, eta = opts.eta0;
      std::size_t next = 0;
      std::vector<double>* px =
          opts.record_paths ? &out.xi_paths[static_cast<std::size_t>(rep)] : nullptr;
      std::vector<double>* pe =
          opts.record_paths ? &out.eta_paths[static_cast<std::size_t>(rep)] : nullptr;
      for (std::size_t i = 0; i <= steps; ++i) {
        if (next < nn && nodes[next] == i) {
          pt.xx[next] += xi * xi;
          pt.xe[next] += xi * eta;
          pt.ee[next] += eta * eta;
          if (px) {
            px->push_back(xi);
            pe->push_back(eta);
          }
          ++next;
        }
        if (i == steps) break;
        const double z = rng.normal();
        const double nxi = xi + h * opts.rho * eta;
        eta += -h * k * xi + sig * sqh * z;
        xi = nxi;
      }
    }
  });

  out.ensemble.t = out.t;
  out.ensemble.xx.assign(nn, 0.0);
  out.ensemble.xe.assign(nn, 0.0);
  out.ensemble.ee.assign(nn, 0.0);
  const double nr = static_cast<double>(opts.replicas);
  for (std::size_t j = 0; j < nn; ++j) {
    for (const auto& pt : partial) {
      out.ensemble.xx[j] += pt.xx[j];
      out.ensemble.xe[j] += pt.xe[j];
      out.ensemble.ee[j] += pt.ee[j];
    }
    out.ensemble.xx[j] /= nr;
    out.ensemble.xe[j] /= nr;
    out.ensemble.ee[j] /= nr;
  }
  return out;
}

ConvergenceReport convergence_study(
    double r, double rho,
    const std::vector<std::pair<double, std::size_t>>& ladder, double T,
    int replicas, std::uint64_t seed, int threads) {
  if (ladder.empty() || replicas < 2)
    throw std::invalid_argument("convergence_study: need a ladder and replicas >= 2");
  const OscillatorMoments mom = oscillator_moment_ode(r, rho, T);
  const double target = mom.xx.back();

  ConvergenceReport rep;
  rep.T = T;
  rep.entries.resize(ladder.size());
  for (std::size_t li = 0; li < ladder.size(); ++li) {
    const auto [lam, n] = ladder[li];
    std::vector<double> xi_T(static_cast<std::size_t>(replicas), 0.0);
    parallel_for_index(replicas, threads, [&](int k) {
      const RescaledPath path = rescaled_from_micro(
          r, rho, lam, n, T, T,  // endpoint only: sample step = horizon
          derive_stream(seed, 0xc0de, li, static_cast<std::uint64_t>(k)));
      xi_T[static_cast<std::size_t>(k)] = path.xi_hat.back();
    });
    double s = 0.0, s2 = 0.0;
    for (double v : xi_T) {
      s += v;
      s2 += v * v;
    }
    const double nr = static_cast<double>(replicas);
    const double var = (s2 - s * s / nr) / (nr - 1.0);
    auto& e = rep.entries[li];
    e.lambda_n = lam;
    e.n = n;
    e.var_xi_hat = var;
    e.oscillator_var = target;
    e.rel_gap = std::abs(var - target) / target;
    e.scaling_healthy = std::sqrt(lam) <= std::log(static_cast<double>(n));
  }

  int inversions = 0;
  for (std::size_t i = 1; i < rep.entries.size(); ++i)
    if (rep.entries[i].rel_gap > rep.entries[i - 1].rel_gap) ++inversions;
  rep.gaps_non_increasing = inversions <= 1;
  return rep;
}

}  // namespace dcp
