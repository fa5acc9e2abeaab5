#include "dcp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "dcp/fluct.hpp"

namespace dcp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// In-place iterative radix-2 Cooley-Tukey; size must be a power of two.
void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& z : a) z /= static_cast<double>(n);
}

// DFT of arbitrary length via Bluestein's chirp transform.
std::vector<cplx> dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  if ((n & (n - 1)) == 0) {
    std::vector<cplx> a = x;
    fft_pow2(a, false);
    return a;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> a(m, cplx(0.0)), b(m, cplx(0.0));
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // e^{-i pi k^2 / n}; reduce k^2 mod 2n to keep the angle accurate
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), -std::sin(ang));
  }
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = cplx(1.0);
  for (std::size_t k = 1; k < n; ++k)
    b[k] = b[m - k] = std::conj(chirp[k]);
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
  fft_pow2(a, true);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  return out;
}

// |sum_j x_j e^{-i omega j dt}|^2 at one arbitrary frequency (Goertzel).
double power_at(const std::vector<double>& x, double theta) {
  const double c = 2.0 * std::cos(theta);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (const double v : x) {
    s0 = v + c * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const double re = s1 - s2 * std::cos(theta);
  const double im = s2 * std::sin(theta);
  return re * re + im * im;
}

void accumulate_component(const std::vector<std::vector<double>>& paths,
                          double dt, const PsdOptions& opts,
                          std::size_t seg_len, const std::vector<double>& omega,
                          bool fourier_grid, std::vector<double>& acc,
                          std::size_t& count) {
  std::vector<double> seg(seg_len);
  std::vector<double> window;
  double win_power = 1.0;
  if (opts.hann) {
    window.resize(seg_len);
    double wp = 0.0;
    for (std::size_t j = 0; j < seg_len; ++j) {
      window[j] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(j) /
                                       static_cast<double>(seg_len));
      wp += window[j] * window[j];
    }
    win_power = wp / static_cast<double>(seg_len);
  }
  const double t_seg = static_cast<double>(seg_len) * dt;
  const double norm = dt * dt / (t_seg * win_power);

  for (const auto& path : paths) {
    const std::size_t burn =
        static_cast<std::size_t>(std::floor(opts.burn_in * static_cast<double>(path.size())));
    const std::size_t avail = path.size() - burn;
    const std::size_t nseg = avail / seg_len;
    for (std::size_t s = 0; s < nseg; ++s) {
      const double* src = path.data() + burn + s * seg_len;
      double mean = 0.0;
      if (opts.demean) {
        for (std::size_t j = 0; j < seg_len; ++j) mean += src[j];
        mean /= static_cast<double>(seg_len);
      }
      for (std::size_t j = 0; j < seg_len; ++j) {
        seg[j] = src[j] - mean;
        if (opts.hann) seg[j] *= window[j];
      }
      if (fourier_grid) {
        std::vector<cplx> buf(seg_len);
        for (std::size_t j = 0; j < seg_len; ++j) buf[j] = seg[j];
        const std::vector<cplx> sp = dft(buf);
        for (std::size_t k = 0; k < omega.size(); ++k)
          acc[k] += std::norm(sp[k + 1]) * norm;  // grid starts at k = 1
      } else {
        for (std::size_t k = 0; k < omega.size(); ++k)
          acc[k] += power_at(seg, omega[k] * dt) * norm;
      }
      ++count;
    }
  }
}

}  // namespace

SpectrumTable analytic_psd(const ModelParams& p, std::vector<double> omega) {
  if (!p.supercritical())
    throw std::invalid_argument("analytic_psd: subcritical parameters");
  const Eigen::Matrix2d f = stationary_drift(p);
  const Eigen::Matrix2d a = stationary_diffusion_sq(p);
  const double det = f.determinant();
  const double tr2 = f.trace() * f.trace();
  const double n11_const = a(0, 0) * f(1, 1) * f(1, 1) +
                           a(1, 1) * f(0, 1) * f(0, 1) -
                           2.0 * f(0, 1) * f(1, 1) * a(0, 1);
  const double n22_const = a(1, 1) * f(0, 0) * f(0, 0) +
                           a(0, 0) * f(1, 0) * f(1, 0) -
                           2.0 * f(0, 0) * f(1, 0) * a(1, 0);
  SpectrumTable t;
  t.kind = SpectrumTable::Kind::analytic;
  t.omega = std::move(omega);
  t.s11.reserve(t.omega.size());
  t.s22.reserve(t.omega.size());
  for (const double w : t.omega) {
    const double u = w * w;
    const double den = (u - det) * (u - det) + u * tr2;
    t.s11.push_back((a(0, 0) * u + n11_const) / den);
    t.s22.push_back((a(1, 1) * u + n22_const) / den);
  }
  return t;
}

SpectrumTable asymptotic_psd(double r, double rho, double lambda,
                             std::vector<double> omega) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("asymptotic_psd: need rho in (0,1)");
  const double d = r * (1.0 - rho) * lambda;
  const double tr2 = r * r / (rho * rho);
  const double n11_const = r * (1.0 - rho) * rho * rho * lambda * lambda;
  const double r3 = r * r * r / (rho * rho);
  const double n22_const = r3 * (1.0 - rho) + 2.0 * r3 * std::pow(1.0 - rho, 3) -
                           2.0 * r3 * (1.0 - rho) * (1.0 - rho);
  SpectrumTable t;
  t.kind = SpectrumTable::Kind::asymptotic;
  t.omega = std::move(omega);
  t.s11.reserve(t.omega.size());
  t.s22.reserve(t.omega.size());
  for (const double w : t.omega) {
    const double u = w * w;
    const double den = (u - d) * (u - d) + tr2 * u;
    t.s11.push_back((2.0 * r * (1.0 - rho) * u + n11_const) / den);
    t.s22.push_back((r * (1.0 - rho) * u + n22_const) / den);
  }
  return t;
}

SpectrumTable estimate_psd(const std::vector<std::vector<double>>& xi_paths,
                           const std::vector<std::vector<double>>& eta_paths,
                           double dt, const PsdOptions& opts) {
  if (xi_paths.empty() || !(dt > 0.0))
    throw std::invalid_argument("estimate_psd: need paths and dt > 0");
  const std::size_t len = xi_paths.front().size();
  for (const auto& p : xi_paths)
    if (p.size() != len)
      throw std::invalid_argument("estimate_psd: ragged path lengths");
  const std::size_t burn =
      static_cast<std::size_t>(std::floor(opts.burn_in * static_cast<double>(len)));
  if (burn >= len) throw std::invalid_argument("estimate_psd: burn-in eats everything");
  std::size_t seg_len = opts.segment_len == 0 ? len - burn : opts.segment_len;
  seg_len = std::min(seg_len, len - burn);
  if (seg_len < 4) throw std::invalid_argument("estimate_psd: segment too short");

  SpectrumTable t;
  t.kind = SpectrumTable::Kind::estimated;
  const bool fourier = opts.omega.empty();
  if (fourier) {
    // one-sided Fourier frequencies 2 pi k / (seg_len dt), k = 1..seg_len/2
    const double d_omega = 2.0 * kPi / (static_cast<double>(seg_len) * dt);
    for (std::size_t k = 1; k <= seg_len / 2; ++k)
      t.omega.push_back(d_omega * static_cast<double>(k));
  } else {
    t.omega = opts.omega;
  }

  t.s11.assign(t.omega.size(), 0.0);
  std::size_t count = 0;
  accumulate_component(xi_paths, dt, opts, seg_len, t.omega, fourier, t.s11, count);
  for (double& v : t.s11) v /= static_cast<double>(count);
  if (!eta_paths.empty()) {
    t.s22.assign(t.omega.size(), 0.0);
    std::size_t count2 = 0;
    accumulate_component(eta_paths, dt, opts, seg_len, t.omega, fourier, t.s22,
                         count2);
    for (double& v : t.s22) v /= static_cast<double>(count2);
  }

  t.meta.dt = dt;
  t.meta.burn_in = opts.burn_in;
  t.meta.segment_len = seg_len;
  t.meta.segments_averaged = count;
  t.meta.taper = opts.hann ? "hann" : "none";
  t.meta.demeaned = opts.demean;
  if (opts.warn_omega > 0.0) {
    const double periods =
        static_cast<double>(seg_len) * dt / (2.0 * kPi / opts.warn_omega);
    t.meta.segment_too_short = periods < 8.0;
  }
  return t;
}

std::vector<double> log_spaced_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > lo) || n < 2)
    throw std::invalid_argument("log_spaced_grid: bad range");
  std::vector<double> g(n);
  const double step = std::log(hi / lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo * std::exp(step * static_cast<double>(i));
  return g;
}

std::vector<double> default_peak_grid(const ModelParams& p) {
  const double ws = omega_star(p);
  return log_spaced_grid(ws / 20.0, 20.0 * ws, 4096);
}

std::pair<double, double> spectrum_peak(const SpectrumTable& table,
                                        int component) {
  const std::vector<double>& s = component == 0 ? table.s11 : table.s22;
  if (s.empty()) throw std::invalid_argument("spectrum_peak: empty table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  return {table.omega[best], s[best]};
}

}  // namespace dcp
