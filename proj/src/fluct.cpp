#include "dcp/fluct.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcp/parallel.hpp"
#include "dcp/rng.hpp"

namespace dcp {

Eigen::Matrix2d sqrt_psd_2x2(const Eigen::Matrix2d& a) {
  Eigen::Matrix2d s = 0.5 * (a + a.transpose());
  const double tr = s.trace();
  const double det = s.determinant();
  // smaller eigenvalue of the symmetric matrix
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  const double lo = 0.5 * tr - disc;
  if (lo < -1e-12)
    throw std::runtime_error("sqrt_psd_2x2: matrix is not PSD beyond tolerance");
  if (lo < 0.0) s -= lo * Eigen::Matrix2d::Identity();  // clamp to PSD
  const double sd = std::sqrt(std::max(0.0, s.determinant()));
  const double denom2 = s.trace() + 2.0 * sd;
  if (denom2 <= 0.0) return Eigen::Matrix2d::Zero();  // only when A == 0
  return (s + sd * Eigen::Matrix2d::Identity()) / std::sqrt(denom2);
}

DriftDiffusion drift_diffusion_at(const ModelParams& p, const MacroState& macro,
                                  double t) {
  const auto y = macro.at(t);
  const double m = y[0], v = y[1], x2 = y[2];
  DriftDiffusion dd;
  dd.F = jacobian(p, m, v);
  const double gain = p.lambda * (1.0 - m) * v;
  dd.A << gain + p.r * m, gain + p.r * v,
          gain + p.r * v, gain + p.r * x2;
  dd.Sigma = sqrt_psd_2x2(dd.A);
  return dd;
}

Eigen::Matrix2d stationary_drift(const ModelParams& p) {
  const FixedPoint fp = endemic_point(p);
  return jacobian(p, fp.m, fp.v);
}

Eigen::Matrix2d stationary_diffusion_sq(const ModelParams& p) {
  const FixedPoint fp = endemic_point(p);
  const double gain = p.lambda * (1.0 - fp.m) * fp.v;
  const double x2 = stationary_moment(p, 2);
  Eigen::Matrix2d a;
  a << gain + p.r * fp.m, gain + p.r * fp.v,
       gain + p.r * fp.v, gain + p.r * x2;
  return a;
}

Eigen::Matrix2d lyapunov_2x2(const Eigen::Matrix2d& f, const Eigen::Matrix2d& a) {
  if (!(f.trace() < 0.0 && f.determinant() > 0.0))
    throw std::invalid_argument("lyapunov_2x2: drift matrix is not Hurwitz");
  Eigen::Matrix3d sys;
  sys << 2.0 * f(0, 0), 2.0 * f(0, 1), 0.0,
         f(1, 0), f(0, 0) + f(1, 1), f(0, 1),
         0.0, 2.0 * f(1, 0), 2.0 * f(1, 1);
  const Eigen::Vector3d rhs(-a(0, 0), -0.5 * (a(0, 1) + a(1, 0)), -a(1, 1));
  const Eigen::Vector3d c = sys.partialPivLu().solve(rhs);
  Eigen::Matrix2d out;
  out << c[0], c[1], c[1], c[2];
  return out;
}

Eigen::Matrix2d stationary_covariance(const ModelParams& p) {
  if (!p.supercritical())
    throw std::invalid_argument("stationary_covariance: subcritical parameters");
  return lyapunov_2x2(stationary_drift(p), stationary_diffusion_sq(p));
}

Eigen::Matrix2d expm_2x2(const Eigen::Matrix2d& m) {
  // e^M = e^s (cosh(w) I + sinh(w)/w B), M = s I + B, tr B = 0, B^2 = w^2 I
  const double s = 0.5 * m.trace();
  const Eigen::Matrix2d b = m - s * Eigen::Matrix2d::Identity();
  const double w2 = s * s - m.determinant();  // det B = det M - s^2
  double ch, shw;  // cosh(w), sinh(w)/w
  if (std::abs(w2) < 1e-12) {
    ch = 1.0 + 0.5 * w2;
    shw = 1.0 + w2 / 6.0;
  } else if (w2 > 0.0) {
    const double w = std::sqrt(w2);
    ch = std::cosh(w);
    shw = std::sinh(w) / w;
  } else {
    const double w = std::sqrt(-w2);
    ch = std::cos(w);
    shw = std::sin(w) / w;
  }
  return std::exp(s) * (ch * Eigen::Matrix2d::Identity() + shw * b);
}

FluctEnsemble simulate_fluct(const ModelParams& p, const MacroState& macro,
                             const FluctOptions& opts) {
  if (!(opts.h > 0.0) || !(opts.T > 0.0) || opts.replicas < 1)
    throw std::invalid_argument("simulate_fluct: bad options");
  const std::size_t steps =
      static_cast<std::size_t>(std::ceil(opts.T / opts.h - 1e-9));
  const double h = opts.T / static_cast<double>(steps);
  const double sqh = std::sqrt(h);
  const std::size_t stride = std::max<std::size_t>(1, opts.sample_stride);

  // coefficients are deterministic: evaluate once, share across replicas
  std::vector<Eigen::Matrix2d> drift(steps), noise(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const DriftDiffusion dd =
        drift_diffusion_at(p, macro, h * static_cast<double>(k));
    drift[k] = Eigen::Matrix2d::Identity() + h * dd.F;
    noise[k] = sqh * dd.Sigma;
  }

  std::vector<std::size_t> nodes;  // recorded step indices
  for (std::size_t k = 0; k <= steps; k += stride) nodes.push_back(k);
  if (nodes.back() != steps) nodes.push_back(steps);
  const std::size_t nn = nodes.size();

  FluctEnsemble out;
  out.t.resize(nn);
  for (std::size_t j = 0; j < nn; ++j)
    out.t[j] = h * static_cast<double>(nodes[j]);

  // Replicas are grouped into fixed-size chunks; chunk sums depend only on
  // replica indices and are combined in chunk order, so results are invariant
  // to the worker-thread count.
  constexpr int kChunk = 256;
  const int chunks = (opts.replicas + kChunk - 1) / kChunk;
  struct Partial {
    std::vector<Eigen::Vector2d> s1;
    std::vector<Eigen::Matrix2d> s2;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(chunks));
  if (opts.record_paths)
    out.paths.assign(static_cast<std::size_t>(opts.replicas), {});

  parallel_for_index(chunks, opts.threads, [&](int ci) {
    auto& pt = partial[static_cast<std::size_t>(ci)];
    pt.s1.assign(nn, Eigen::Vector2d::Zero());
    pt.s2.assign(nn, Eigen::Matrix2d::Zero());
    const int lo = ci * kChunk;
    const int hi = std::min(opts.replicas, lo + kChunk);
    for (int rep = lo; rep < hi; ++rep) {
      Rng rng(derive_stream(opts.seed, 0xf1c7, static_cast<std::uint64_t>(rep)));
      Eigen::Vector2d x = opts.x0;
      std::size_t next_node = 0;
      std::vector<Eigen::Vector2d>* path =
          opts.record_paths ? &out.paths[static_cast<std::size_t>(rep)] : nullptr;
      if (path) path->reserve(nn);
      for (std::size_t k = 0; k <= steps; ++k) {
        if (next_node < nn && nodes[next_node] == k) {
          pt.s1[next_node] += x;
          pt.s2[next_node] += x * x.transpose();
          if (path) path->push_back(x);
          ++next_node;
        }
        if (k == steps) break;
        const Eigen::Vector2d z(rng.normal(), rng.normal());
        x = drift[k] * x + noise[k] * z;
      }
    }
  });

  out.mean.assign(nn, Eigen::Vector2d::Zero());
  out.cov.assign(nn, Eigen::Matrix2d::Zero());
  const double nr = static_cast<double>(opts.replicas);
  for (std::size_t j = 0; j < nn; ++j) {
    Eigen::Vector2d s1 = Eigen::Vector2d::Zero();
    Eigen::Matrix2d s2 = Eigen::Matrix2d::Zero();
    for (const auto& pt : partial) {
      s1 += pt.s1[j];
      s2 += pt.s2[j];
    }
    out.mean[j] = s1 / nr;
    if (opts.replicas > 1)
      out.cov[j] = (s2 - s1 * s1.transpose() / nr) / (nr - 1.0);
  }
  return out;
}

}  // namespace dcp
