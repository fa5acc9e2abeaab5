#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dcp/initial_law.hpp"
#include "dcp/model.hpp"
#include "dcp/rng.hpp"

namespace dcp {

struct EventRecord {
  enum class Kind { infection, recovery, absorbed, horizon };
  Kind kind = Kind::absorbed;
  double time = 0.0;
  std::uint32_t particle = 0;
};

/// Waiting time to the next infection event when the total infection rate at
/// the start is rate0 and decays like e^{-alpha d}: solves
///   rate0 (1 - e^{-alpha d}) / alpha = e.
/// The cumulative hazard saturates at rate0/alpha, so the distribution is
/// defective: returns +inf with probability e^{-rate0/alpha}.
inline double infection_delay(double rate0, double alpha, double e) {
  if (!(rate0 > 0.0)) return std::numeric_limits<double>::infinity();
  const double arg = alpha * e / rate0;
  if (arg >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::log1p(-arg) / alpha;
}

/// N-particle state of the dissipative contact process. Loads are stored
/// implicitly: an infected particle carries the time its load was last set
/// to 1, so deterministic decay costs nothing per particle. Aggregates
/// sum_x and sum_x2 are maintained multiplicatively and re-derived from the
/// particle states every 10^4 events to cancel floating-point drift.
class ParticleSystem {
 public:
  ParticleSystem(const ModelParams& p, std::size_t n, const InitialLaw& mu0,
                 std::uint64_t seed);

  /// Explicit initial loads (values in [0,1]); exact zero means susceptible.
  ParticleSystem(const ModelParams& p, std::span<const double> loads,
                 std::uint64_t seed);

  const ModelParams& params() const { return params_; }
  std::size_t size() const { return n_; }
  double clock() const { return clock_; }
  std::size_t infected_count() const { return infected_; }
  double sum_x() const { return sum_x_; }
  double sum_x2() const { return sum_x2_; }
  std::uint64_t events() const { return events_; }
  std::uint64_t seed() const { return seed_; }

  double m_n() const { return static_cast<double>(infected_) / static_cast<double>(n_); }
  double v_n() const { return sum_x_ / static_cast<double>(n_); }
  double v2_n() const { return sum_x2_ / static_cast<double>(n_); }

  bool absorbed() const { return infected_ == 0 && sum_x_ == 0.0; }
  bool is_infected(std::size_t i) const { return pos_[i] < infected_; }
  double load(std::size_t i) const {
    return is_infected(i) ? std::exp(-params_.alpha * (clock_ - tau_[i])) : 0.0;
  }

  /// Advances to the next jump (or to t_max, whichever is earlier) by
  /// inverting the two cumulative hazards against independent exponential
  /// draws and committing the earlier candidate.
  EventRecord step_exact(Rng& rng, double t_max = std::numeric_limits<double>::infinity());

  /// Synchronous Euler step: exact within-step decay, v_N frozen at the step
  /// start, exponential one-step jump probabilities. Each particle consumes
  /// exactly one uniform from its own counter-based stream per step.
  void step_euler(double dt);

  /// Re-derives sum_x / sum_x2 from particle states; returns |correction|
  /// applied to sum_x.
  double refresh_caches();

  /// Per-particle Euler stream override (exchangeability tests).
  void set_euler_stream(std::size_t i, std::uint64_t s) { streams_[i] = s; }
  std::uint64_t euler_stream(std::size_t i) const { return streams_[i]; }

 private:
  void init_from_loads(std::span<const double> loads);
  void infect(std::size_t i, double t);
  void recover(std::size_t i);
  void decay_caches(double dt);

  ModelParams params_;
  std::size_t n_ = 0;
  std::uint64_t seed_ = 0;
  double clock_ = 0.0;
  std::size_t infected_ = 0;
  double sum_x_ = 0.0;
  double sum_x2_ = 0.0;
  std::uint64_t events_ = 0;
  std::uint64_t euler_step_ = 0;
  std::vector<double> tau_;           // time of last up-jump (infected only)
  std::vector<std::uint32_t> order_;  // permutation; [0, infected_) infected
  std::vector<std::uint32_t> pos_;    // inverse of order_
  std::vector<std::uint64_t> streams_;
};

struct TrajectorySample {
  std::vector<double> t, m, v, v2;
  std::uint64_t seed = 0;
  std::uint64_t events = 0;
};

enum class SimMode { exact, euler };

/// Samples the aggregates on the given grid (grid must be nondecreasing and
/// within [clock, T]). Between jumps the deterministic decay is interpolated
/// exactly. Once absorbed, the remaining grid is filled with zeros.
TrajectorySample run(ParticleSystem& sys, double T, std::span<const double> grid,
                     SimMode mode, Rng& rng, double dt_euler = 1e-3);

std::vector<double> uniform_grid(double t0, double t1, double dt);

struct CouplingResult {
  std::vector<std::size_t> n_ladder;
  std::vector<double> mean_sup_error;                // per ladder entry
  std::vector<std::vector<double>> replica_errors;   // [ladder][replica]
  double fitted_slope = 0.0;
  double slope_stderr = 0.0;
};

/// Shared-stream coupling: for each N the particle system and N i.i.d. copies of
/// the limit process are driven by the same per-particle candidate streams,
/// thinned against v_N versus the deterministic v(t). Records the mean of
///   sup_{t<=T} |x_i - xbar_i| + |sigma_i - sigmabar_i|
/// and fits the log-log slope of error against N.
CouplingResult coupled_chaos_experiment(const ModelParams& p,
                                        std::vector<std::size_t> n_ladder,
                                        double T, int replicas,
                                        std::uint64_t seed,
                                        const InitialLaw& mu0,
                                        int threads = 0, double macro_h = 1e-3);

}  // namespace dcp
