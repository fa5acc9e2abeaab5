#include "dcp/micro.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "dcp/macro.hpp"
#include "dcp/parallel.hpp"

namespace dcp {

namespace {
constexpr std::uint64_t kRefreshEvery = 10000;
}  // namespace

ParticleSystem::ParticleSystem(const ModelParams& p, std::size_t n,
                               const InitialLaw& mu0, std::uint64_t seed)
    : params_(p), n_(n), seed_(seed) {
  if (n == 0) throw std::invalid_argument("ParticleSystem: need n >= 1");
  Rng rng(derive_stream(seed, 0x1a17));
  std::vector<double> loads(n);
  for (auto& x : loads) x = mu0.sample(p, rng);
  init_from_loads(loads);
}

ParticleSystem::ParticleSystem(const ModelParams& p,
                               std::span<const double> loads,
                               std::uint64_t seed)
    : params_(p), n_(loads.size()), seed_(seed) {
  if (n_ == 0) throw std::invalid_argument("ParticleSystem: need n >= 1");
  init_from_loads(loads);
}

void ParticleSystem::init_from_loads(std::span<const double> loads) {
  const std::size_t n = n_;
  tau_.assign(n, 0.0);
  order_.resize(n);
  pos_.resize(n);
  streams_.resize(n);
  // infected first, susceptibles after; loads at clock 0 are encoded as
  // tau = log(x)/alpha
  std::size_t lo = 0, hi = n;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = loads[i];
    if (!(x >= 0.0 && x <= 1.0))
      throw std::invalid_argument("ParticleSystem: loads must lie in [0,1]");
    streams_[i] = derive_stream(seed_, 0xe01e, i);
    if (x > 0.0) {
      tau_[i] = std::log(x) / params_.alpha;
      sum_x_ += x;
      sum_x2_ += x * x;
      order_[lo] = static_cast<std::uint32_t>(i);
      pos_[i] = static_cast<std::uint32_t>(lo);
      ++lo;
    } else {
      --hi;
      order_[hi] = static_cast<std::uint32_t>(i);
      pos_[i] = static_cast<std::uint32_t>(hi);
    }
  }
  infected_ = lo;
  if (infected_ == 0) {
    sum_x_ = 0.0;
    sum_x2_ = 0.0;
  }
}

void ParticleSystem::infect(std::size_t i, double t) {
  const std::uint32_t pi = pos_[i];
  const std::uint32_t boundary = static_cast<std::uint32_t>(infected_);
  const std::uint32_t j = order_[boundary];
  std::swap(order_[pi], order_[boundary]);
  pos_[i] = boundary;
  pos_[j] = pi;
  tau_[i] = t;
  ++infected_;
  sum_x_ += 1.0;
  sum_x2_ += 1.0;
}

void ParticleSystem::recover(std::size_t i) {
  const double x = load(i);
  const std::uint32_t pi = pos_[i];
  const std::uint32_t boundary = static_cast<std::uint32_t>(infected_ - 1);
  const std::uint32_t j = order_[boundary];
  std::swap(order_[pi], order_[boundary]);
  pos_[i] = boundary;
  pos_[j] = pi;
  --infected_;
  if (infected_ == 0) {
    sum_x_ = 0.0;  // null state is absorbing, keep it exact
    sum_x2_ = 0.0;
  } else {
    sum_x_ = std::max(0.0, sum_x_ - x);
    sum_x2_ = std::max(0.0, sum_x2_ - x * x);
  }
}

void ParticleSystem::decay_caches(double dt) {
  const double d = std::exp(-params_.alpha * dt);
  sum_x_ *= d;
  sum_x2_ *= d * d;
}

double ParticleSystem::refresh_caches() {
  double sx = 0.0, sx2 = 0.0;
  for (std::size_t k = 0; k < infected_; ++k) {
    const double x =
        std::exp(-params_.alpha * (clock_ - tau_[order_[k]]));
    sx += x;
    sx2 += x * x;
  }
  const double delta = std::abs(sx - sum_x_);
  sum_x_ = sx;
  sum_x2_ = sx2;
  return delta;
}

EventRecord ParticleSystem::step_exact(Rng& rng, double t_max) {
  if (absorbed()) return {EventRecord::Kind::absorbed, clock_, 0};

  const std::size_t susceptible = n_ - infected_;
  const double rate_up =
      params_.lambda * static_cast<double>(susceptible) * v_n();
  const double d_up = infection_delay(rate_up, params_.alpha, rng.exponential());
  const double d_dn = rng.exponential() / (params_.r * static_cast<double>(infected_));

  const double d = std::min(d_up, d_dn);
  if (clock_ + d > t_max) {
    if (std::isfinite(t_max) && t_max > clock_) {
      decay_caches(t_max - clock_);
      clock_ = t_max;
    }
    return {EventRecord::Kind::horizon, clock_, 0};
  }

  decay_caches(d);
  clock_ += d;
  ++events_;
  EventRecord rec;
  rec.time = clock_;
  if (d_up <= d_dn) {
    const std::size_t k =
        infected_ + static_cast<std::size_t>(rng.u01() * static_cast<double>(susceptible));
    const std::uint32_t i = order_[std::min(k, n_ - 1)];
    infect(i, clock_);
    rec.kind = EventRecord::Kind::infection;
    rec.particle = i;
  } else {
    const std::size_t k =
        static_cast<std::size_t>(rng.u01() * static_cast<double>(infected_));
    const std::uint32_t i = order_[std::min(k, infected_ - 1)];
    recover(i);
    rec.kind = EventRecord::Kind::recovery;
    rec.particle = i;
  }
  if (events_ % kRefreshEvery == 0) refresh_caches();
  return rec;
}

void ParticleSystem::step_euler(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_euler: need dt > 0");
  const double p_inf = -std::expm1(-params_.lambda * v_n() * dt);
  const double p_rec = -std::expm1(-params_.r * dt);
  clock_ += dt;
  decay_caches(dt);
  const std::uint64_t step = euler_step_++;
  for (std::size_t i = 0; i < n_; ++i) {
    const double u = counter_u01(streams_[i], step);
    if (is_infected(i)) {
      if (u < p_rec) {
        recover(i);
        ++events_;
      }
    } else if (u < p_inf) {
      infect(i, clock_);
      ++events_;
    }
  }
  if (step % 256 == 255) refresh_caches();
}

std::vector<double> uniform_grid(double t0, double t1, double dt) {
  std::vector<double> g;
  const std::size_t steps =
      static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));
  g.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    g.push_back(t0 + dt * static_cast<double>(i));
  return g;
}

TrajectorySample run(ParticleSystem& sys, double T, std::span<const double> grid,
                     SimMode mode, Rng& rng, double dt_euler) {
  if (!grid.empty()) {
    if (grid.front() < sys.clock() || grid.back() > T + 1e-12)
      throw std::invalid_argument("run: grid must lie within [clock, T]");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1]))
        throw std::invalid_argument("run: grid must be strictly increasing");
  }
  TrajectorySample out;
  out.seed = sys.seed();
  out.t.assign(grid.begin(), grid.end());
  out.m.reserve(grid.size());
  out.v.reserve(grid.size());
  out.v2.reserve(grid.size());
  const double n = static_cast<double>(sys.size());
  const double alpha = sys.params().alpha;
  std::size_t gi = 0;

  // state snapshot from which grid points are interpolated
  double c0 = sys.clock();
  double m0 = sys.m_n(), sx0 = sys.sum_x(), sx20 = sys.sum_x2();
  auto fill_until = [&](double t_limit, bool inclusive) {
    while (gi < grid.size() &&
           (grid[gi] < t_limit || (inclusive && grid[gi] <= t_limit))) {
      const double d = std::exp(-alpha * (grid[gi] - c0));
      out.m.push_back(m0);
      out.v.push_back(sx0 * d / n);
      out.v2.push_back(sx20 * d * d / n);
      ++gi;
    }
  };

  if (mode == SimMode::exact) {
    while (gi < grid.size()) {
      if (sys.absorbed()) {
        for (; gi < grid.size(); ++gi) {
          out.m.push_back(0.0);
          out.v.push_back(0.0);
          out.v2.push_back(0.0);
        }
        break;
      }
      const EventRecord ev = sys.step_exact(rng, T);
      if (ev.kind == EventRecord::Kind::horizon) {
        fill_until(T + 1e-9 * std::max(1.0, T), true);
        break;
      }
      fill_until(ev.time, false);
      c0 = sys.clock();
      m0 = sys.m_n();
      sx0 = sys.sum_x();
      sx20 = sys.sum_x2();
    }
    fill_until(T + 1e-9 * std::max(1.0, T), true);
  } else {
    while (sys.clock() + dt_euler <= T + 1e-12 && gi < grid.size()) {
      const double t_next = sys.clock() + dt_euler;
      fill_until(std::min(t_next, T), false);
      sys.step_euler(dt_euler);
      c0 = sys.clock();
      m0 = sys.m_n();
      sx0 = sys.sum_x();
      sx20 = sys.sum_x2();
    }
    fill_until(T + 1e-9 * std::max(1.0, T), true);
  }
  out.events = sys.events();
  return out;
}

namespace {

// Coupled micro/limit pair for one particle, lazily decayed loads.
struct PairState {
  double mic_tau = 0.0;
  double lim_tau = 0.0;
  bool mic_up = false;
  bool lim_up = false;
  double err = 0.0;
};

struct Candidate {
  double t;
  std::uint32_t particle;
  bool operator>(const Candidate& o) const {
    return t > o.t || (t == o.t && particle > o.particle);
  }
};

double replica_coupling_error(const ModelParams& p, std::size_t n, double T,
                              const InitialLaw& mu0, const MacroState& macro,
                              std::uint64_t master, std::uint64_t rep_tag) {
  const double merged_rate = p.lambda + p.r;
  const double p_up = p.lambda / merged_rate;
  std::vector<PairState> pair(n);
  std::vector<Rng> streams;
  streams.reserve(n);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> queue;

  double sum_x = 0.0;   // micro aggregate
  double sum_clock = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    streams.emplace_back(derive_stream(master, rep_tag, i));
    Rng& rng = streams.back();
    const double x0 = mu0.sample(p, rng);
    auto& ps = pair[i];
    if (x0 > 0.0) {
      ps.mic_up = ps.lim_up = true;
      ps.mic_tau = ps.lim_tau = std::log(x0) / p.alpha;
      sum_x += x0;
    }
    queue.push({rng.exponential() / merged_rate, static_cast<std::uint32_t>(i)});
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  while (!queue.empty() && queue.top().t <= T) {
    const Candidate c = queue.top();
    queue.pop();
    auto& ps = pair[c.particle];
    Rng& rng = streams[c.particle];

    const bool is_up = rng.u01() < p_up;
    bool changed = false;
    if (is_up) {
      const double mark = rng.u01();
      const double v_mic = sum_x * std::exp(-p.alpha * (c.t - sum_clock)) * inv_n;
      if (!ps.mic_up && mark < v_mic) {
        sum_x = sum_x * std::exp(-p.alpha * (c.t - sum_clock)) + 1.0;
        sum_clock = c.t;
        ps.mic_up = true;
        ps.mic_tau = c.t;
        changed = true;
      }
      if (!ps.lim_up && mark < macro.v_at(c.t)) {
        ps.lim_up = true;
        ps.lim_tau = c.t;
        changed = true;
      }
    } else {
      if (ps.mic_up) {
        const double x = std::exp(-p.alpha * (c.t - ps.mic_tau));
        sum_x = std::max(0.0, sum_x * std::exp(-p.alpha * (c.t - sum_clock)) - x);
        sum_clock = c.t;
        ps.mic_up = false;
        changed = true;
      }
      if (ps.lim_up) {
        ps.lim_up = false;
        changed = true;
      }
    }
    if (changed) {
      const double xm =
          ps.mic_up ? std::exp(-p.alpha * (c.t - ps.mic_tau)) : 0.0;
      const double xl =
          ps.lim_up ? std::exp(-p.alpha * (c.t - ps.lim_tau)) : 0.0;
      const double d =
          std::abs(xm - xl) + (ps.mic_up == ps.lim_up ? 0.0 : 1.0);
      if (d > ps.err) ps.err = d;
    }
    queue.push({c.t + rng.exponential() / merged_rate, c.particle});
  }

  double acc = 0.0;
  for (const auto& ps : pair) acc += ps.err;
  return acc * inv_n;
}

}  // namespace

CouplingResult coupled_chaos_experiment(const ModelParams& p,
                                        std::vector<std::size_t> n_ladder,
                                        double T, int replicas,
                                        std::uint64_t seed,
                                        const InitialLaw& mu0, int threads,
                                        double macro_h) {
  if (n_ladder.empty() || replicas < 1)
    throw std::invalid_argument("coupled_chaos_experiment: empty plan");
  if (!std::is_sorted(n_ladder.begin(), n_ladder.end()))
    throw std::invalid_argument("coupled_chaos_experiment: ladder must increase");

  const MacroState macro =
      integrate_macro(p, macro_init_from(mu0, p), T, macro_h);

  CouplingResult res;
  res.n_ladder = n_ladder;
  res.replica_errors.assign(n_ladder.size(),
                            std::vector<double>(static_cast<std::size_t>(replicas), 0.0));
  for (std::size_t li = 0; li < n_ladder.size(); ++li) {
    auto& slot = res.replica_errors[li];
    const std::size_t n = n_ladder[li];
    parallel_for_index(replicas, threads, [&](int rep) {
      slot[static_cast<std::size_t>(rep)] = replica_coupling_error(
          p, n, T, mu0, macro, seed,
          (static_cast<std::uint64_t>(li) << 32) | static_cast<std::uint64_t>(rep));
    });
  }

  res.mean_sup_error.resize(n_ladder.size());
  for (std::size_t li = 0; li < n_ladder.size(); ++li) {
    double acc = 0.0;
    for (double e : res.replica_errors[li]) acc += e;
    res.mean_sup_error[li] = acc / static_cast<double>(replicas);
  }

  // OLS fit of log(error) against log(N)
  const std::size_t k = n_ladder.size();
  if (k >= 2 &&
      std::all_of(res.mean_sup_error.begin(), res.mean_sup_error.end(),
                  [](double e) { return e > 0.0; })) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double x = std::log(static_cast<double>(n_ladder[i]));
      const double y = std::log(res.mean_sup_error[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double kd = static_cast<double>(k);
    const double sxx_c = sxx - sx * sx / kd;
    res.fitted_slope = (sxy - sx * sy / kd) / sxx_c;
    if (k > 2) {
      double ss = 0.0;
      const double icpt = (sy - res.fitted_slope * sx) / kd;
      for (std::size_t i = 0; i < k; ++i) {
        const double x = std::log(static_cast<double>(n_ladder[i]));
        const double y = std::log(res.mean_sup_error[i]);
        const double rres = y - icpt - res.fitted_slope * x;
        ss += rres * rres;
      }
      res.slope_stderr = std::sqrt(ss / (kd - 2.0) / sxx_c);
    }
  } else {
    res.fitted_slope = std::numeric_limits<double>::quiet_NaN();
    res.slope_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

}  // namespace dcp
