#pragma once

// Continuous-time Monte Carlo of the constrained dynamics.
//
// Uniform-clock scheme: the total clock rings at rate |volume|; a ring picks
// a uniform site and, when the constraint holds, resamples the site to empty
// with probability q, filled with probability p. Resampling to the current
// value is allowed but not recorded as an event. This reproduces the flip
// rates c_x * q (filled -> empty) and c_x * p (empty -> filled) exactly.
//
// Snapshot semantics: the state at time t is the state after all rings with
// time <= t (paths are right-continuous step functions).
//
// Replica r of master seed s draws from Rng::stream(s, r); aggregation is a
// reduction ordered by replica index, so results do not depend on the
// worker count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "kcmlab/model.hpp"
#include "kcmlab/partition.hpp"
#include "kcmlab/rng.hpp"

namespace kcmlab {

struct SimParams {
  double t_max = 0.0;
  std::vector<double> record_times;  // sorted, nonnegative, <= t_max
  std::uint64_t seed = 0;
  int replicas = 1;

  void validate() const {
    if (replicas < 1) throw std::invalid_argument("replica count must be >= 1");
    if (t_max < 0) throw std::invalid_argument("t_max must be >= 0");
    double prev = 0.0;
    for (double t : record_times) {
      if (t < prev || t > t_max)
        throw std::invalid_argument("record times must be sorted within [0, t_max]");
      prev = t;
    }
  }
};

struct FlipEvent {
  double time;
  int site;  // volume site index
  std::uint8_t old_value, new_value;
};

struct Trajectory {
  std::vector<std::uint8_t> initial;
  std::vector<FlipEvent> events;
  std::vector<double> record_times;
  std::vector<std::vector<std::uint8_t>> snapshots;
  bool exited_A = false;
  double exit_A_time = -1.0;
};

namespace detail {

// One uniform-clock run. on_flip(site, old, new, t) fires on accepted flips;
// on_record(k, sigma) fires once per record time in order.
template <typename OnFlip, typename OnRecord>
void run_uniform_clock(const ModelSpec& spec, Configuration& sigma,
                       double t_max, const std::vector<double>& record_times,
                       Rng& rng, OnFlip&& on_flip, OnRecord&& on_record) {
  const int n = sigma.ctx->size();
  const double total_rate = static_cast<double>(n);
  double t = 0.0;
  std::size_t next_record = 0;
  auto record_until = [&](double now) {
    while (next_record < record_times.size() && record_times[next_record] < now) {
      on_record(next_record, sigma);
      ++next_record;
    }
  };
  while (true) {
    double t_next = t + rng.exponential(total_rate);
    if (t_next > t_max) break;
    record_until(t_next);
    t = t_next;
    int site = rng.uniform_index(n);
    if (constraint(spec, sigma, site)) {
      std::uint8_t value = rng.bernoulli(spec.q) ? 0 : 1;
      if (value != sigma.occ[site]) {
        std::uint8_t old = sigma.occ[site];
        sigma.occ[site] = value;
        on_flip(site, old, value, t);
      }
    }
  }
  record_until(std::nextafter(t_max, std::numeric_limits<double>::infinity()));
}

template <typename Fn>
void parallel_for_replicas(int replicas, int workers, Fn&& body) {
  if (workers <= 1 || replicas == 1) {
    for (int r = 0; r < replicas; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next.fetch_add(1); r < replicas; r = next.fetch_add(1)) body(r);
  };
  std::vector<std::thread> pool;
  int count = std::min(workers, replicas);
  pool.reserve(count);
  for (int i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Full event-recording run (small volumes, replay tests, exit tracking).
inline Trajectory simulate(const VolumeContext& ctx, const ModelSpec& spec,
                           const Configuration& sigma0, const SimParams& params,
                           Rng& rng, const Partition* track_A = nullptr) {
  params.validate();
  spec.validate();
  Trajectory traj;
  traj.initial = sigma0.occ;
  traj.record_times = params.record_times;

  Configuration sigma = sigma0;

  std::vector<int> block_vac;
  std::vector<int> site_block;
  if (track_A) {
    auto owner = track_A->block_of(ctx.graph().vertex_count());
    site_block.resize(ctx.size());
    block_vac.assign(track_A->block_count(), 0);
    for (int i = 0; i < ctx.size(); ++i) {
      site_block[i] = owner[ctx.vertex_of(i)];
      if (sigma.occ[i] == 0 && site_block[i] >= 0) ++block_vac[site_block[i]];
    }
    for (int b = 0; b < track_A->block_count(); ++b)
      if (block_vac[b] < 2) {
        traj.exited_A = true;
        traj.exit_A_time = 0.0;
      }
  }

  auto on_flip = [&](int site, std::uint8_t oldv, std::uint8_t newv, double t) {
    traj.events.push_back({t, site, oldv, newv});
    if (track_A && !traj.exited_A) {
      int b = site_block[site];
      if (b >= 0) {
        block_vac[b] += (newv == 0) - (oldv == 0);
        // only losing a vacancy can leave A
        if (newv == 1 && block_vac[b] < 2) {
          traj.exited_A = true;
          traj.exit_A_time = t;
        }
      }
    }
  };
  auto on_record = [&](std::size_t, const Configuration& s) {
    traj.snapshots.push_back(s.occ);
  };
  detail::run_uniform_clock(spec, sigma, params.t_max, params.record_times, rng,
                            on_flip, on_record);
  return traj;
}

// Replays a trajectory against a partition: whether and when the path first
// left the two-vacancies-per-block component.
inline std::pair<bool, double> track_exit_A(const VolumeContext& ctx,
                                            const Trajectory& traj,
                                            const Partition& p) {
  auto owner = p.block_of(ctx.graph().vertex_count());
  std::vector<int> block_vac(p.block_count(), 0);
  std::vector<int> site_block(ctx.size());
  for (int i = 0; i < ctx.size(); ++i) {
    int b = owner[ctx.vertex_of(i)];
    if (b < 0) throw std::invalid_argument("partition does not cover the volume");
    site_block[i] = b;
    if (traj.initial[i] == 0) ++block_vac[b];
  }
  for (int b = 0; b < p.block_count(); ++b)
    if (block_vac[b] < 2) return {true, 0.0};
  for (const auto& ev : traj.events) {
    int b = site_block[ev.site];
    block_vac[b] += (ev.new_value == 0) - (ev.old_value == 0);
    if (ev.new_value == 1 && block_vac[b] < 2) return {true, ev.time};
  }
  return {false, -1.0};
}

struct SeriesEstimate {
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> stderrs;  // sample std / sqrt(replicas)
  int replicas = 0;
};

// Independent replicas, fresh initial draw and RNG stream each; per-time
// mean and standard error of functional(sigma_t).
inline SeriesEstimate estimate_series(
    const VolumeContext& ctx, const ModelSpec& spec, const InitialLaw& law,
    const std::function<double(const Configuration&)>& functional,
    const SimParams& params, int workers) {
  params.validate();
  spec.validate();
  const int T = static_cast<int>(params.record_times.size());
  const int R = params.replicas;
  std::vector<double> sum(T, 0.0), sumsq(T, 0.0);
  std::vector<std::vector<double>> values(R);

  detail::parallel_for_replicas(R, workers, [&](int r) {
    Rng rng = Rng::stream(params.seed, static_cast<std::uint64_t>(r));
    Configuration sigma = sample_initial(law, ctx, rng);
    std::vector<double> vals(T, 0.0);
    auto on_record = [&](std::size_t k, const Configuration& s) {
      vals[k] = functional(s);
    };
    detail::run_uniform_clock(spec, sigma, params.t_max, params.record_times,
                              rng, [](int, std::uint8_t, std::uint8_t, double) {},
                              on_record);
    values[r] = std::move(vals);
  });

  for (int r = 0; r < R; ++r)
    for (int k = 0; k < T; ++k) {
      sum[k] += values[r][k];
      sumsq[k] += values[r][k] * values[r][k];
    }

  SeriesEstimate est;
  est.times = params.record_times;
  est.replicas = R;
  est.means.resize(T);
  est.stderrs.resize(T);
  for (int k = 0; k < T; ++k) {
    double mean = sum[k] / R;
    est.means[k] = mean;
    double var = R > 1 ? std::max(0.0, (sumsq[k] - R * mean * mean) / (R - 1)) : 0.0;
    est.stderrs[k] = std::sqrt(var / R);
  }
  return est;
}

inline SeriesEstimate estimate_expectation(const VolumeContext& ctx,
                                           const ModelSpec& spec,
                                           const InitialLaw& law,
                                           const Observable& f,
                                           const SimParams& params, int workers) {
  f.validate();
  for (int v : f.support)
    if (ctx.site_index(v) < 0)
      throw std::invalid_argument("observable support must lie in the volume");
  return estimate_series(
      ctx, spec, law, [&f](const Configuration& s) { return f.eval(s); }, params,
      workers);
}

// E[theta^{xi_t}] at the record times. Requires an empty boundary so that
// xi stays finite and theta^xi cannot blow up.
inline SeriesEstimate estimate_xi_moment(const VolumeContext& ctx,
                                         const ModelSpec& spec,
                                         const InitialLaw& law, double theta,
                                         int x_vertex, const SimParams& params,
                                         int workers) {
  if (!(theta > 1.0)) throw std::invalid_argument("xi moment needs theta > 1");
  if (ctx.boundary_condition().kind != BoundaryCondition::Kind::Empty)
    throw std::invalid_argument("xi moment estimation requires an empty boundary");
  return estimate_series(
      ctx, spec, law,
      [theta, x_vertex](const Configuration& s) {
        return std::pow(theta, xi(s, x_vertex));
      },
      params, workers);
}

struct ExitStats {
  SeriesEstimate not_in_A;     // pointwise P(sigma_t not in A)
  SeriesEstimate exited_by_t;  // P(path left A at some s <= t)
  double sup_not_in_A = 0.0;   // max over the recorded grid
};

inline ExitStats estimate_exit_stats(const VolumeContext& ctx,
                                     const ModelSpec& spec,
                                     const InitialLaw& law, const Partition& p,
                                     const SimParams& params, int workers) {
  params.validate();
  const int T = static_cast<int>(params.record_times.size());
  const int R = params.replicas;
  auto owner = p.block_of(ctx.graph().vertex_count());
  std::vector<int> site_block(ctx.size());
  for (int i = 0; i < ctx.size(); ++i) {
    site_block[i] = owner[ctx.vertex_of(i)];
    if (site_block[i] < 0)
      throw std::invalid_argument("partition does not cover the volume");
  }

  std::vector<std::vector<std::uint8_t>> out_flags(R), exit_flags(R);
  detail::parallel_for_replicas(R, workers, [&](int r) {
    Rng rng = Rng::stream(params.seed, static_cast<std::uint64_t>(r));
    Configuration sigma = sample_initial(law, ctx, rng);
    std::vector<int> block_vac(p.block_count(), 0);
    for (int i = 0; i < ctx.size(); ++i)
      if (sigma.occ[i] == 0) ++block_vac[site_block[i]];
    int deficient = 0;
    for (int b = 0; b < p.block_count(); ++b) deficient += (block_vac[b] < 2);
    bool exited = deficient > 0;

    std::vector<std::uint8_t> out(T, 0), exit_by(T, 0);
    auto on_flip = [&](int site, std::uint8_t oldv, std::uint8_t newv, double) {
      int b = site_block[site];
      bool was_deficient = block_vac[b] < 2;
      block_vac[b] += (newv == 0) - (oldv == 0);
      bool is_deficient = block_vac[b] < 2;
      deficient += int(is_deficient) - int(was_deficient);
      if (deficient > 0) exited = true;
    };
    auto on_record = [&](std::size_t k, const Configuration&) {
      out[k] = deficient > 0;
      exit_by[k] = exited;
    };
    detail::run_uniform_clock(spec, sigma, params.t_max, params.record_times,
                              rng, on_flip, on_record);
    out_flags[r] = std::move(out);
    exit_flags[r] = std::move(exit_by);
  });

  auto reduce = [&](const std::vector<std::vector<std::uint8_t>>& flags) {
    SeriesEstimate est;
    est.times = params.record_times;
    est.replicas = R;
    est.means.resize(T);
    est.stderrs.resize(T);
    for (int k = 0; k < T; ++k) {
      double sum = 0;
      for (int r = 0; r < R; ++r) sum += flags[r][k];
      double mean = sum / R;
      est.means[k] = mean;
      double var = R > 1 ? mean * (1.0 - mean) * R / (R - 1) : 0.0;
      est.stderrs[k] = std::sqrt(var / R);
    }
    return est;
  };
  ExitStats stats;
  stats.not_in_A = reduce(out_flags);
  stats.exited_by_t = reduce(exit_flags);
  for (double v : stats.not_in_A.means) stats.sup_not_in_A = std::max(stats.sup_not_in_A, v);
  return stats;
}

// ---------------------------------------------------------------------------
// Finite-speed comparison: the same observable under two nested volumes,
// coupled by giving every site its own ring clock and refresh draws, keyed by
// graph vertex, so shared sites see identical noise in both volumes.

struct CoupledDifference {
  std::vector<double> times;
  std::vector<double> mean_small, mean_large;
  std::vector<double> abs_difference;   // |mean of paired differences|
  std::vector<double> diff_stderr;      // stderr of the paired differences
  int replicas = 0;
};

namespace detail {

struct SiteEvent {
  double time;
  int vertex;
  std::uint8_t refresh;  // 0 = empty, 1 = filled
};

// Per-site Poisson(1) rings with attached refresh values on [0, t_max].
inline std::vector<SiteEvent> presampled_events(const std::vector<int>& vertices,
                                                const ModelSpec& spec,
                                                double t_max,
                                                std::uint64_t replica_seed) {
  std::vector<SiteEvent> events;
  for (int v : vertices) {
    Rng site_rng = Rng::stream(replica_seed, 0x10000ULL + static_cast<std::uint64_t>(v));
    double t = 0.0;
    while (true) {
      t += site_rng.exponential(1.0);
      if (t > t_max) break;
      events.push_back({t, v, site_rng.bernoulli(spec.q) ? std::uint8_t{0} : std::uint8_t{1}});
    }
  }
  std::sort(events.begin(), events.end(),
            [](const SiteEvent& a, const SiteEvent& b) {
              return a.time < b.time || (a.time == b.time && a.vertex < b.vertex);
            });
  return events;
}

inline void apply_events(const VolumeContext& ctx, const ModelSpec& spec,
                         Configuration& sigma,
                         const std::vector<SiteEvent>& events,
                         const std::vector<double>& record_times,
                         const std::function<double(const Configuration&)>& f,
                         std::vector<double>& vals) {
  std::size_t next_record = 0;
  auto record_until = [&](double now) {
    while (next_record < record_times.size() && record_times[next_record] < now) {
      vals[next_record] = f(sigma);
      ++next_record;
    }
  };
  for (const auto& ev : events) {
    int site = ctx.site_index(ev.vertex);
    if (site < 0) continue;
    record_until(ev.time);
    if (constraint(spec, sigma, site)) sigma.occ[site] = ev.refresh;
  }
  record_until(std::numeric_limits<double>::infinity());
}

}  // namespace detail

inline CoupledDifference finite_speed_compare(
    const Graph& g, const std::vector<int>& small_volume,
    const std::vector<int>& large_volume, const BoundaryCondition& bc,
    const ModelSpec& spec, const InitialLaw& law, const Observable& f,
    const SimParams& params, int workers) {
  params.validate();
  for (int v : small_volume) {
    bool found = false;
    for (int w : large_volume) found |= (v == w);
    if (!found)
      throw std::invalid_argument("small volume must be contained in the large one");
  }
  VolumeContext ctx_small(g, small_volume, bc);
  VolumeContext ctx_large(g, large_volume, bc);
  const int T = static_cast<int>(params.record_times.size());
  const int R = params.replicas;

  std::vector<std::vector<double>> vs(R), vl(R);
  detail::parallel_for_replicas(R, workers, [&](int r) {
    std::uint64_t replica_seed = params.seed ^ mix64(static_cast<std::uint64_t>(r) + 1);
    // one shared draw for the initial law on the large volume; the small
    // volume inherits the restriction
    Rng init_rng = Rng::stream(replica_seed, 0xABCDULL);
    Configuration sigma_l = sample_initial(law, ctx_large, init_rng);
    Configuration sigma_s(ctx_small);
    for (int i = 0; i < ctx_small.size(); ++i)
      sigma_s.occ[i] = sigma_l.occ[ctx_large.site_index(ctx_small.vertex_of(i))];

    auto events = detail::presampled_events(large_volume, spec, params.t_max,
                                            replica_seed);
    std::vector<double> a(T, 0.0), b(T, 0.0);
    auto feval = [&f](const Configuration& s) { return f.eval(s); };
    detail::apply_events(ctx_small, spec, sigma_s, events, params.record_times,
                         feval, a);
    detail::apply_events(ctx_large, spec, sigma_l, events, params.record_times,
                         feval, b);
    vs[r] = std::move(a);
    vl[r] = std::move(b);
  });

  CoupledDifference out;
  out.times = params.record_times;
  out.replicas = R;
  out.mean_small.assign(T, 0.0);
  out.mean_large.assign(T, 0.0);
  out.abs_difference.assign(T, 0.0);
  out.diff_stderr.assign(T, 0.0);
  for (int k = 0; k < T; ++k) {
    double sum_d = 0, sumsq_d = 0;
    for (int r = 0; r < R; ++r) {
      out.mean_small[k] += vs[r][k] / R;
      out.mean_large[k] += vl[r][k] / R;
      double d = vs[r][k] - vl[r][k];
      sum_d += d;
      sumsq_d += d * d;
    }
    double mean_d = sum_d / R;
    out.abs_difference[k] = std::abs(mean_d);
    double var = R > 1 ? std::max(0.0, (sumsq_d - R * mean_d * mean_d) / (R - 1)) : 0.0;
    out.diff_stderr[k] = std::sqrt(var / R);
  }
  return out;
}

}  // namespace kcmlab
