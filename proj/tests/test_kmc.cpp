#include "doctest.h"

#include "kcmlab/exact.hpp"
#include "kcmlab/kmc.hpp"

#include <cmath>

using namespace kcmlab;

namespace {

std::vector<int> interior(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i + 1;
  return v;
}

SimParams params_for(double t_max, std::vector<double> times, std::uint64_t seed,
                     int replicas) {
  SimParams p;
  p.t_max = t_max;
  p.record_times = std::move(times);
  p.seed = seed;
  p.replicas = replicas;
  return p;
}

}  // namespace

TEST_CASE("blocked configuration never moves") {
  auto g = build_lattice({6}, false);
  VolumeContext ctx(g, interior(4), BoundaryCondition::filled());
  ModelSpec spec{0.7, ConstraintKind::FA1f};
  Configuration all_filled(ctx, 1);
  Rng rng(5);
  auto traj = simulate(ctx, spec, all_filled,
                       params_for(50.0, {0.0, 10.0, 50.0}, 5, 1), rng);
  CHECK(traj.events.empty());
  for (const auto& snap : traj.snapshots) CHECK(snap == all_filled.occ);
}

TEST_CASE("t_max zero returns the initial state") {
  auto g = build_lattice({5}, false);
  VolumeContext ctx(g, interior(3), BoundaryCondition::empty());
  ModelSpec spec{0.5, ConstraintKind::FA1f};
  Rng rng(1);
  Configuration sigma(ctx, 1);
  sigma.occ = {1, 0, 1};
  auto traj = simulate(ctx, spec, sigma, params_for(0.0, {0.0}, 1, 1), rng);
  REQUIRE(traj.snapshots.size() == 1);
  CHECK(traj.snapshots[0] == sigma.occ);
}

TEST_CASE("trajectories are deterministic and replayable") {
  auto g = build_lattice({8}, false);
  VolumeContext ctx(g, interior(6), BoundaryCondition::empty());
  ModelSpec spec{0.6, ConstraintKind::FA1f};
  Configuration sigma0(ctx, 1);
  auto params = params_for(5.0, {1.0, 2.5, 5.0}, 42, 1);

  Rng r1 = Rng::stream(42, 3);
  Rng r2 = Rng::stream(42, 3);
  auto t1 = simulate(ctx, spec, sigma0, params, r1);
  auto t2 = simulate(ctx, spec, sigma0, params, r2);
  REQUIRE(t1.events.size() == t2.events.size());
  for (std::size_t i = 0; i < t1.events.size(); ++i) {
    CHECK(t1.events[i].time == t2.events[i].time);
    CHECK(t1.events[i].site == t2.events[i].site);
  }

  // replay events against each snapshot
  auto state = t1.initial;
  std::size_t next_event = 0;
  for (std::size_t k = 0; k < t1.record_times.size(); ++k) {
    while (next_event < t1.events.size() &&
           t1.events[next_event].time <= t1.record_times[k]) {
      state[t1.events[next_event].site] = t1.events[next_event].new_value;
      ++next_event;
    }
    CHECK(state == t1.snapshots[k]);
  }
  // event times strictly increase
  for (std::size_t i = 1; i < t1.events.size(); ++i)
    CHECK(t1.events[i].time > t1.events[i - 1].time);
}

TEST_CASE("single facilitated site relaxes to vacancy density q") {
  // one site with an empty neighbor outside: expected P(empty) -> q
  auto g = build_lattice({3}, false);
  VolumeContext ctx(g, {1}, BoundaryCondition::empty());
  ModelSpec spec{0.8, ConstraintKind::FA1f};
  Observable vac;
  vac.support = {1};
  vac.table = {1.0, 0.0};
  auto est = estimate_expectation(ctx, spec, InitialLaw::dirac({1}), vac,
                                  params_for(10.0, {10.0}, 7, 20000), 2);
  CHECK(std::abs(est.means[0] - 0.8) <= 4 * est.stderrs[0]);
  CHECK(est.stderrs[0] < 0.01);
}

TEST_CASE("xi moves by at most one per accepted flip") {
  auto g = build_lattice({9}, false);
  VolumeContext ctx(g, interior(7), BoundaryCondition::empty());
  ModelSpec spec{0.5, ConstraintKind::FA1f};
  Configuration sigma(ctx, 1);
  Rng rng(11);
  int x = ctx.vertex_of(3);
  int prev = xi(sigma, x);
  auto traj = simulate(ctx, spec, sigma, params_for(20.0, {}, 11, 1), rng);
  auto state = sigma;
  for (const auto& ev : traj.events) {
    state.occ[ev.site] = ev.new_value;
    int cur = xi(state, x);
    CHECK(std::abs(cur - prev) <= 1);
    prev = cur;
  }
  CHECK(traj.events.size() > 10);  // the run actually moved
}

TEST_CASE("MC agrees with uniformization on a small chain") {
  auto g = build_lattice({6}, false);
  auto volume = interior(4);
  std::vector<double> times{0.5, 1.0, 2.0};

  for (double q : {0.3, 0.8}) {
    for (auto bc : {BoundaryCondition::empty(), BoundaryCondition::filled()}) {
      ModelSpec spec{q, ConstraintKind::FA1f};
      auto f = Observable::vacancy_at(2, q);
      VolumeContext ctx(g, volume, bc);
      Configuration sigma0(ctx, 1);
      sigma0.occ = {1, 0, 1, 1};

      auto Q = build_generator(g, volume, bc, spec);
      std::uint32_t bits = 0b1101;
      auto exact =
          transient_expectation(Q, dirac_distribution(Q, bits),
                                observable_on_states(Q, f), times);

      auto est = estimate_expectation(ctx, spec, InitialLaw::dirac(sigma0.occ),
                                      f, params_for(2.0, times, 99, 40000), 2);
      for (std::size_t k = 0; k < times.size(); ++k)
        CHECK(std::abs(est.means[k] - exact[k]) <= 4 * est.stderrs[k]);
    }
  }
}

TEST_CASE("stationary start stays centered") {
  auto g = build_lattice({10}, false);
  VolumeContext ctx(g, interior(8), BoundaryCondition::empty());
  ModelSpec spec{0.8, ConstraintKind::FA1f};
  auto f = Observable::vacancy_at(4, 0.8);
  auto est = estimate_expectation(ctx, spec, InitialLaw::bernoulli(spec.p()), f,
                                  params_for(4.0, {0.0, 1.0, 2.0, 4.0}, 17, 20000),
                                  2);
  for (std::size_t k = 0; k < est.times.size(); ++k)
    CHECK(std::abs(est.means[k]) <= 4 * est.stderrs[k]);
}

TEST_CASE("time-zero mean matches the initial law") {
  auto g = build_lattice({7}, false);
  VolumeContext ctx(g, interior(5), BoundaryCondition::empty());
  ModelSpec spec{0.8, ConstraintKind::FA1f};
  auto f = Observable::vacancy_at(3, 0.8);
  // initial law Bernoulli fill 0.5: E f(sigma_0) = 0.5 - 0.8
  auto est = estimate_expectation(ctx, spec, InitialLaw::bernoulli(0.5), f,
                                  params_for(0.0, {0.0}, 3, 20000), 2);
  CHECK(std::abs(est.means[0] - (-0.3)) <= 4 * est.stderrs[0]);
}

TEST_CASE("stderr scales like one over sqrt(replicas)") {
  auto g = build_lattice({7}, false);
  VolumeContext ctx(g, interior(5), BoundaryCondition::empty());
  ModelSpec spec{0.6, ConstraintKind::FA1f};
  auto f = Observable::vacancy_at(3, 0.6);
  auto small = estimate_expectation(ctx, spec, InitialLaw::bernoulli(0.9), f,
                                    params_for(1.0, {1.0}, 5, 4000), 2);
  auto large = estimate_expectation(ctx, spec, InitialLaw::bernoulli(0.9), f,
                                    params_for(1.0, {1.0}, 5, 16000), 2);
  // quadrupling replicas should halve the stderr within 20%
  CHECK(large.stderrs[0] == doctest::Approx(small.stderrs[0] / 2).epsilon(0.2));
}

TEST_CASE("worker count does not change results") {
  auto g = build_lattice({7}, false);
  VolumeContext ctx(g, interior(5), BoundaryCondition::empty());
  ModelSpec spec{0.7, ConstraintKind::FA1f};
  auto f = Observable::vacancy_at(3, 0.7);
  auto p = params_for(2.0, {1.0, 2.0}, 31, 500);
  auto a = estimate_expectation(ctx, spec, InitialLaw::bernoulli(0.5), f, p, 1);
  auto b = estimate_expectation(ctx, spec, InitialLaw::bernoulli(0.5), f, p, 2);
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    CHECK(a.means[k] == b.means[k]);
    CHECK(a.stderrs[k] == b.stderrs[k]);
  }
}

TEST_CASE("exit tracking") {
  auto g = build_lattice({8}, false);
  auto volume = interior(6);
  VolumeContext ctx(g, volume, BoundaryCondition::empty());
  ModelSpec spec{0.5, ConstraintKind::FA1f};
  Partition p;
  p.blocks = {{1, 2, 3}, {4, 5, 6}};
  p.centers = {2, 5};
  p.radius = 1;

  SUBCASE("already outside A at time zero") {
    Configuration sigma(ctx, 1);
    Rng rng(2);
    auto traj = simulate(ctx, spec, sigma, params_for(1.0, {}, 2, 1), rng, &p);
    CHECK(traj.exited_A);
    CHECK(traj.exit_A_time == 0.0);
  }

  SUBCASE("q = 1 never refills, so A is never left") {
    ModelSpec only_empty{1.0, ConstraintKind::FA1f};
    Configuration all_empty(ctx, 0);
    Rng rng(3);
    auto traj = simulate(ctx, only_empty, all_empty,
                         params_for(20.0, {}, 3, 1), rng, &p);
    CHECK_FALSE(traj.exited_A);
    auto replay = track_exit_A(ctx, traj, p);
    CHECK_FALSE(replay.first);
  }

  SUBCASE("replay matches online tracking") {
    Configuration all_empty(ctx, 0);
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng = Rng::stream(77, seed);
      auto traj = simulate(ctx, spec, all_empty, params_for(3.0, {}, 77, 1),
                           rng, &p);
      auto replay = track_exit_A(ctx, traj, p);
      CHECK(replay.first == traj.exited_A);
      if (replay.first) CHECK(replay.second == traj.exit_A_time);
    }
  }

  SUBCASE("exit probability matches the exact taboo transient") {
    Configuration all_empty(ctx, 0);
    std::vector<double> times{0.25, 0.5, 1.0};
    auto stats = estimate_exit_stats(ctx, spec, InitialLaw::dirac(all_empty.occ),
                                     p, params_for(1.0, times, 13, 40000), 2);
    auto Q = build_generator(g, volume, BoundaryCondition::empty(), spec);
    auto A_states = component_states(*Q.ctx, p, 2);
    std::vector<char> allowed(Q.dim(), 0);
    for (auto s : A_states) allowed[Q.idx.pos[s]] = 1;
    auto surv = taboo_survival(Q, allowed, dirac_distribution(Q, 0), times);
    for (std::size_t k = 0; k < times.size(); ++k) {
      double exact_exit = 1.0 - surv[k];
      CHECK(std::abs(stats.exited_by_t.means[k] - exact_exit) <=
            4 * stats.exited_by_t.stderrs[k] + 1e-9);
    }
  }
}

TEST_CASE("xi moment estimation needs an empty boundary") {
  auto g = build_lattice({6}, false);
  VolumeContext closed(g, interior(4), BoundaryCondition::filled());
  ModelSpec spec{0.8, ConstraintKind::FA1f};
  SimParams p = params_for(1.0, {1.0}, 1, 10);
  CHECK_THROWS_AS(estimate_xi_moment(closed, spec, InitialLaw::bernoulli(0.5),
                                     2.0, 2, p, 1),
                  std::invalid_argument);
}

TEST_CASE("xi moment: t = 0 from a Dirac start is exact") {
  auto g = build_lattice({9}, false);
  VolumeContext ctx(g, interior(7), BoundaryCondition::empty());
  ModelSpec spec{0.8, ConstraintKind::FA1f};
  Configuration eta(ctx, 1);
  int x = ctx.vertex_of(3);
  REQUIRE(xi(eta, x) == 4);
  auto est = estimate_xi_moment(ctx, spec, InitialLaw::dirac(eta.occ), 2.0, x,
                                params_for(0.0, {0.0}, 9, 50), 1);
  CHECK(est.means[0] == doctest::Approx(16.0));
  CHECK(est.stderrs[0] == doctest::Approx(0.0));
}

TEST_CASE("xi moment is nonincreasing when q = 1") {
  auto g = build_lattice({9}, false);
  VolumeContext ctx(g, interior(7), BoundaryCondition::empty());
  ModelSpec spec{1.0, ConstraintKind::FA1f};
  Configuration eta(ctx, 1);
  auto est = estimate_xi_moment(ctx, spec, InitialLaw::dirac(eta.occ), 2.0,
                                ctx.vertex_of(3),
                                params_for(4.0, {0.0, 1.0, 2.0, 4.0}, 21, 2000),
                                2);
  for (std::size_t k = 1; k < est.times.size(); ++k)
    CHECK(est.means[k] <=
          est.means[k - 1] + 4 * (est.stderrs[k] + est.stderrs[k - 1]));
}

TEST_CASE("finite speed coupling") {
  auto g = build_lattice({41}, false);
  std::vector<int> small_vol, large_vol;
  for (int v = 15; v <= 25; ++v) small_vol.push_back(v);
  for (int v = 5; v <= 35; ++v) large_vol.push_back(v);
  ModelSpec spec{0.7, ConstraintKind::FA1f};
  auto f = Observable::vacancy_at(20, 0.7);

  SUBCASE("identical volumes give identically zero difference") {
    auto diff = finite_speed_compare(g, small_vol, small_vol,
                                     BoundaryCondition::empty(), spec,
                                     InitialLaw::bernoulli(0.9), f,
                                     params_for(2.0, {0.0, 1.0, 2.0}, 19, 200),
                                     2);
    for (double d : diff.abs_difference) CHECK(d == 0.0);
  }

  SUBCASE("difference is zero at t = 0 and small before influence arrives") {
    auto diff = finite_speed_compare(g, small_vol, large_vol,
                                     BoundaryCondition::empty(), spec,
                                     InitialLaw::bernoulli(0.9), f,
                                     params_for(1.5, {0.0, 0.5, 1.0, 1.5}, 23,
                                                4000),
                                     2);
    CHECK(diff.abs_difference[0] == 0.0);
    // supp(f) sits 5 sites from the small volume's boundary; for t well
    // below that distance the coupled runs should not have separated
    for (std::size_t k = 1; k < diff.times.size(); ++k)
      CHECK(diff.abs_difference[k] <= 4 * diff.diff_stderr[k] + 1e-12);
  }

  SUBCASE("volume containment is enforced") {
    CHECK_THROWS_AS(finite_speed_compare(g, large_vol, small_vol,
                                         BoundaryCondition::empty(), spec,
                                         InitialLaw::bernoulli(0.9), f,
                                         params_for(1.0, {1.0}, 1, 10), 1),
                    std::invalid_argument);
  }
}
