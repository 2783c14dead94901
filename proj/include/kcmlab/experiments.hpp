#pragma once

// Desk-scale studies built on the simulator and the exact module:
// relaxation-shape fits, the persistence bound, gap-vs-q scans, and the
// end-to-end partition/exit/bound pipeline.
//
// Fits use only points above the noise floor |mean| > 4 * stderr. Decay
// constants are always fitted, never asserted.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kcmlab/checks.hpp"
#include "kcmlab/kmc.hpp"

namespace kcmlab {

struct FitResult {
  bool inconclusive = true;
  std::string model;  // "exponential" or "stretched-with-log"
  double c = 0.0;     // rate constant of the decay law
  double inv_D = 1.0;
  double r_squared = 0.0;
  std::vector<double> window_times;
};

namespace detail {

struct LinearFit {
  double slope = 0, intercept = 0, r_squared = 0;
};

inline LinearFit least_squares(const std::vector<double>& x,
                               const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LinearFit fit;
  double denom = n * sxx - sx * sx;
  if (denom == 0) return fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0, ybar = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = fit.intercept + fit.slope * x[i];
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

}  // namespace detail

struct DecayFits {
  FitResult exponential;
  std::optional<FitResult> stretched;  // present when D > 1 was requested
  int usable_points = 0;
};

// Least squares of log|mean| against t (exponential) and against
// (t / log t)^{1/D} (stretched, D > 1). Stretched fits use only t > 1.
inline DecayFits fit_decay(const SeriesEstimate& series, double D) {
  DecayFits out;
  std::vector<double> ts, logy;
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    double m = std::abs(series.means[i]);
    if (series.times[i] <= 0.0) continue;
    if (m <= 4.0 * series.stderrs[i] || m <= 0.0) continue;  // noise floor
    ts.push_back(series.times[i]);
    logy.push_back(std::log(m));
  }
  out.usable_points = static_cast<int>(ts.size());

  out.exponential.model = "exponential";
  if (ts.size() >= 5) {
    auto fit = detail::least_squares(ts, logy);
    if (fit.slope < -1e-12) {
      out.exponential.inconclusive = false;
      out.exponential.c = -1.0 / fit.slope;
      out.exponential.r_squared = fit.r_squared;
      out.exponential.window_times = ts;
    }
  }

  if (D > 1.0) {
    FitResult st;
    st.model = "stretched-with-log";
    st.inv_D = 1.0 / D;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (ts[i] > 1.0) {
        xs.push_back(std::pow(ts[i] / std::log(ts[i]), 1.0 / D));
        ys.push_back(logy[i]);
      }
    if (xs.size() >= 5) {
      auto fit = detail::least_squares(xs, ys);
      if (fit.slope < -1e-12) {
        st.inconclusive = false;
        st.c = std::pow(-1.0 / fit.slope, D);
        st.r_squared = fit.r_squared;
        st.window_times = xs;
      }
    }
    out.stretched = st;
  }
  return out;
}

// ---------------------------------------------------------------------------

struct RelaxationReport {
  SeriesEstimate series;
  bool stationary_start = false;       // the initial law equals equilibrium
  bool stationary_within_noise = false;
  bool exploratory_regime = false;     // q <= 1/2: outside the proven regime
  DecayFits fits;
};

inline RelaxationReport run_relaxation(const VolumeContext& ctx,
                                       const ModelSpec& spec,
                                       const InitialLaw& law,
                                       const Observable& f,
                                       const SimParams& params, int workers,
                                       double D) {
  RelaxationReport rep;
  rep.exploratory_regime = spec.q <= 0.5;
  rep.series = estimate_expectation(ctx, spec, law, f, params, workers);
  rep.stationary_start =
      law.kind == InitialLaw::Kind::BernoulliProduct &&
      std::abs(law.fill_prob - spec.p()) < 1e-12;
  if (rep.stationary_start) {
    rep.stationary_within_noise = true;
    for (std::size_t k = 0; k < rep.series.times.size(); ++k)
      if (std::abs(rep.series.means[k]) > 4.0 * rep.series.stderrs[k])
        rep.stationary_within_noise = false;
  } else {
    rep.fits = fit_decay(rep.series, D);
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct PersistenceReport {
  bool applicable = false;
  double lambda = 0, asymptote = 0;
  int xi0 = 0;
  double theta = 0;
  SeriesEstimate series;
  std::vector<double> bound;
  std::vector<bool> pass;  // mean <= bound + 4 stderr
  bool all_pass = false;
};

inline PersistenceReport run_persistence(const VolumeContext& ctx,
                                         const ModelSpec& spec, double theta,
                                         int x_vertex,
                                         const Configuration& eta0,
                                         const SimParams& params, int workers) {
  PersistenceReport rep;
  rep.theta = theta;
  if (!(theta > 1.0) || !(spec.q > theta / (theta + 1.0))) return rep;
  rep.applicable = true;
  rep.lambda = xi_drift_lambda(theta, spec.q);
  rep.asymptote = xi_drift_asymptote(theta, spec.q);
  rep.xi0 = xi(eta0, x_vertex);
  rep.series = estimate_xi_moment(ctx, spec, InitialLaw::dirac(eta0.occ), theta,
                                  x_vertex, params, workers);
  rep.all_pass = true;
  for (std::size_t k = 0; k < rep.series.times.size(); ++k) {
    double b = std::pow(theta, rep.xi0) *
                   std::exp(-rep.lambda * rep.series.times[k]) +
               rep.asymptote;
    rep.bound.push_back(b);
    bool ok = rep.series.means[k] <= b + 4.0 * rep.series.stderrs[k];
    rep.pass.push_back(ok);
    rep.all_pass = rep.all_pass && ok;
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct GapScanRow {
  std::string label;
  int volume_size = 0;
  double q = 0;
  double gap = 0;
};

struct GapScanReport {
  std::vector<GapScanRow> rows;
  double fitted_C = 0;         // envelope constant over all rows
  bool envelope_holds = false; // gap >= C q^{D+4} / log(2/q)^{D+1} everywhere
  std::vector<std::pair<double, double>> stability;  // (q, max/min gap ratio)
  bool stability_ok = true;    // all ratios < 2
  bool monotone_in_q = true;   // observed only, never asserted
  double D = 1;
};

inline GapScanReport run_gap_scan(
    const std::vector<std::pair<const Graph*, std::vector<int>>>& volumes,
    const std::vector<double>& q_grid, double D) {
  GapScanReport rep;
  rep.D = D;
  rep.fitted_C = std::numeric_limits<double>::infinity();
  for (double q : q_grid) {
    ModelSpec spec{q, ConstraintKind::FA1f};
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& [g, vol] : volumes) {
      GapScanRow row;
      row.label = g->label();
      row.volume_size = static_cast<int>(vol.size());
      row.q = q;
      row.gap = spectral_gap(build_hat_single(*g, vol, spec)).gap;
      lo = std::min(lo, row.gap);
      hi = std::max(hi, row.gap);
      rep.fitted_C =
          std::min(rep.fitted_C, row.gap * std::pow(std::log(2.0 / q), D + 1.0) /
                                     std::pow(q, D + 4.0));
      rep.rows.push_back(row);
    }
    rep.stability.emplace_back(q, hi / lo);
    if (!(hi / lo < 2.0)) rep.stability_ok = false;
  }
  rep.envelope_holds = true;
  for (const auto& row : rep.rows) {
    double envelope = rep.fitted_C * std::pow(row.q, D + 4.0) /
                      std::pow(std::log(2.0 / row.q), D + 1.0);
    if (row.gap < envelope - kCheckSlack) rep.envelope_holds = false;
  }
  // monotonicity per volume along the grid (rows are grouped by q)
  for (std::size_t v = 0; v < volumes.size(); ++v)
    for (std::size_t iq = 1; iq < q_grid.size(); ++iq) {
      double prev = rep.rows[(iq - 1) * volumes.size() + v].gap;
      double cur = rep.rows[iq * volumes.size() + v].gap;
      if (cur < prev - 1e-9) rep.monotone_in_q = false;
    }
  return rep;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline: blow up the volume by speed_factor * t, partition at
// ell(t), halve blocks, measure the exit probability, assemble the decay
// bound, and compare with the directly measured mean at time t.

struct PipelineInputs {
  double t = 4.0;
  double q = 0.8;
  double epsilon = 1.0;
  double speed_factor = 5.0;  // volume radius grows by this per unit time
  int D = 1;                  // 1 = segment geometry, 2 = square geometry
  double initial_fill = 0.8;  // Bernoulli initial law
  std::uint64_t seed = 1;
  int replicas = 2000;
  int workers = 1;
  long long mc_site_cap = 100000;  // beyond this only the bound is evaluated
};

struct PipelineReport {
  bool applicable = false;   // n e^{-q m} < 1/2
  bool bound_only = false;   // geometry exceeded the MC cap
  int ell = 0;
  int volume_size = 0, n_blocks = 0;
  long long m_min = 0, M_max = 0;
  double sup_not_in_A = 0;
  double measured_abs_mean = 0, measured_stderr = 0;
  double fitted_c = 0;
  double rhs = 0;
  bool passed = false;
  SeriesEstimate series;
  SeriesEstimate not_in_A;
  PartitionCheck partition_check;
};

inline PipelineReport run_pipeline_demo(const PipelineInputs& in) {
  PipelineReport rep;
  ModelSpec spec{in.q, ConstraintKind::FA1f};
  spec.validate();

  // ell(t): epsilon * t in one dimension, epsilon * (t / log t)^{1/D} above
  double raw_ell = in.D == 1
                       ? in.epsilon * in.t
                       : in.epsilon * std::pow(in.t / std::log(std::max(in.t, 1.1)),
                                               1.0 / in.D);
  rep.ell = std::max(1, std::min(static_cast<int>(std::floor(raw_ell)),
                                 static_cast<int>(std::floor(in.t)) + 1));

  // ambient graph: the observable support sits at the center, the volume is
  // the ball of radius r + speed_factor * t around it, one rim layer of the
  // ambient graph remains outside as the (empty) boundary
  const int R = 1 + static_cast<int>(std::ceil(in.speed_factor * in.t));
  std::shared_ptr<Graph> g;
  int center;
  if (in.D == 1) {
    g = std::make_shared<Graph>(build_lattice({2 * R + 3}, false));
    center = R + 1;
  } else {
    g = std::make_shared<Graph>(build_lattice({2 * R + 3, 2 * R + 3}, false));
    center = (R + 1) * (2 * R + 3) + (R + 1);
  }
  auto volume = g->ball(center, R);
  rep.volume_size = static_cast<int>(volume.size());

  auto part = partition_cover(*g, volume, rep.ell);
  part = halve_blocks(*g, part);
  rep.partition_check = check_partition(*g, volume, part);
  rep.n_blocks = part.block_count();
  rep.m_min = part.min_block_size();
  rep.M_max = part.max_block_size();

  Observable f = Observable::vacancy_at(center, in.q);
  if (std::abs(f.mu_mean(in.q)) > 1e-12)
    throw std::invalid_argument("pipeline observable must have mean zero");
  InitialLaw law = InitialLaw::bernoulli(in.initial_fill);

  if (rep.volume_size > in.mc_site_cap) {
    rep.bound_only = true;
    return rep;
  }

  VolumeContext ctx(*g, volume, BoundaryCondition::empty());
  SimParams params;
  params.t_max = in.t;
  params.seed = in.seed;
  params.replicas = in.replicas;
  const int grid_points = 20;
  for (int k = 0; k <= grid_points; ++k)
    params.record_times.push_back(in.t * k / grid_points);

  auto exits = estimate_exit_stats(ctx, spec, law, part, params, in.workers);
  rep.not_in_A = exits.not_in_A;
  rep.sup_not_in_A = exits.sup_not_in_A;
  rep.series = estimate_expectation(ctx, spec, law, f, params, in.workers);
  rep.measured_abs_mean = std::abs(rep.series.means.back());
  rep.measured_stderr = rep.series.stderrs.back();

  InizioInputs bound_in;
  bound_in.n_blocks = rep.n_blocks;
  bound_in.m_min = static_cast<double>(rep.m_min);
  bound_in.M_max = static_cast<double>(rep.M_max);
  bound_in.volume_size = rep.volume_size;
  bound_in.q = in.q;
  bound_in.f_norm_inf = f.norm_inf();
  bound_in.sup_not_in_A = rep.sup_not_in_A;

  auto first = evaluate_inizio_bound(bound_in, in.t);
  if (!first.applicable) return rep;  // hypothesis n e^{-qm} < 1/2 failed
  rep.applicable = true;

  // fit the constant: smallest c on a geometric grid making the bound cover
  // the measured value at time t
  for (double c = 1.0; c <= 64.0; c *= 1.1) {
    bound_in.c = c;
    auto res = evaluate_inizio_bound(bound_in, in.t);
    if (res.rhs >= rep.measured_abs_mean) {
      rep.fitted_c = c;
      rep.rhs = res.rhs;
      rep.passed = true;
      break;
    }
  }
  return rep;
}

}  // namespace kcmlab
