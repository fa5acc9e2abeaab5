#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dcp/model.hpp"

namespace dcp {

/// Large-lambda peak frequency omega* = sqrt(r (1-rho) lambda).
inline double omega_star(const ModelParams& p) {
  return std::sqrt(p.r * (1.0 - p.rho()) * p.lambda);
}

struct SpectrumTable {
  enum class Kind { analytic, asymptotic, estimated };
  Kind kind = Kind::analytic;
  std::vector<double> omega;
  std::vector<double> s11;
  std::vector<double> s22;  // empty when only one component was estimated
  struct Meta {
    double dt = 0.0;
    double burn_in = 0.0;
    std::size_t segment_len = 0;
    std::size_t segments_averaged = 0;
    std::string taper = "none";
    bool demeaned = false;
    bool segment_too_short = false;  // shorter than 8 periods of warn_omega
  } meta;
};

/// Exact stationary power spectral densities S11, S22 of the fluctuation
/// process, evaluated entrywise on the grid. Supercritical only.
SpectrumTable analytic_psd(const ModelParams& p, std::vector<double> omega);

/// Large-lambda asymptotic forms with alpha = rho lambda.
SpectrumTable asymptotic_psd(double r, double rho, double lambda,
                             std::vector<double> omega);

struct PsdOptions {
  double burn_in = 0.2;          // fraction of each path discarded
  bool demean = true;            // subtract per-segment mean
  bool hann = false;             // taper (default: none, plain periodogram)
  std::size_t segment_len = 0;   // samples per segment; 0 = whole path
  std::vector<double> omega;     // custom grid; empty = Fourier frequencies
  double warn_omega = 0.0;       // flag segments shorter than 8 periods of it
};

/// Averaged periodogram |sum_j x_j e^{-i w t_j} dt|^2 / t_seg over paths (and
/// over non-overlapping segments when segment_len is set). On the default
/// Fourier grid the transform runs through an FFT; a custom grid is evaluated
/// directly. eta_paths may be empty; otherwise it fills s22 the same way.
SpectrumTable estimate_psd(const std::vector<std::vector<double>>& xi_paths,
                           const std::vector<std::vector<double>>& eta_paths,
                           double dt, const PsdOptions& opts = {});

std::vector<double> log_spaced_grid(double lo, double hi, std::size_t n);

/// Default peak-search grid: 4096 log-spaced points on [omega*/20, 20 omega*].
std::vector<double> default_peak_grid(const ModelParams& p);

/// (omega, value) of the s11 (component = 0) or s22 (component = 1) maximum.
std::pair<double, double> spectrum_peak(const SpectrumTable& table,
                                        int component = 0);

}  // namespace dcp
