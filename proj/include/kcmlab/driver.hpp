#pragma once

// Subcommand drivers behind the CLI. Each handler consumes a validated JSON
// config and returns the generated files as strings, so the byte-identical
// determinism contract can be tested in-process; the CLI just writes them
// out. Exit codes: 0 success, 1 validation error (thrown as ConfigError),
// 2 a verification assertion failed.

#include <chrono>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kcmlab/config.hpp"
#include "kcmlab/report.hpp"

namespace kcmlab {

struct RunOutput {
  int exit_code = 0;
  std::vector<std::pair<std::string, std::string>> files;
  std::string log;
};

namespace driver {

struct Instance {
  std::shared_ptr<Graph> graph;
  std::vector<int> volume;
  BoundaryCondition bc;
  ModelSpec spec;
  std::shared_ptr<VolumeContext> ctx;
};

inline Instance build_instance(const Json& config) {
  Instance inst;
  inst.graph = std::make_shared<Graph>(parse_graph(config.at("graph")));
  inst.volume = parse_volume(config.value("volume", Json("all")), *inst.graph);
  inst.bc = parse_boundary(config.value("boundary", Json("empty")));
  inst.spec = parse_model(config.at("model"));
  try {
    inst.ctx = std::make_shared<VolumeContext>(*inst.graph, inst.volume, inst.bc);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return inst;
}

inline SimParams parse_sim_params(const Json& config,
                                  std::optional<std::uint64_t> seed_override) {
  SimParams p;
  p.record_times = parse_times(config.at("times"));
  p.t_max = config.contains("t_max")
                ? cfg::number(config["t_max"], "t_max")
                : p.record_times.back();
  p.replicas = cfg::integer(config.at("replicas"), "replicas");
  if (p.replicas < 1) throw ConfigError("replicas must be >= 1");
  p.seed = seed_override ? *seed_override
                         : config.value("seed", std::uint64_t{0});
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

inline Json report_head(const std::string& subcommand, const Json& config,
                        std::uint64_t seed) {
  Json rep;
  rep["subcommand"] = subcommand;
  rep["config"] = config;
  rep["config_hash"] = hex64(config_hash(config));
  rep["seed"] = seed;
  return rep;
}

inline Json partition_json(const Partition& p) {
  Json j;
  j["block_count"] = p.block_count();
  j["radius"] = p.radius;
  j["centers"] = p.centers;
  j["blocks"] = p.blocks;
  j["min_block_size"] = p.min_block_size();
  j["max_block_size"] = p.max_block_size();
  j["certified"] = p.certified;
  j["degenerate_single_block"] = p.degenerate_single_block;
  j["max_leftover_distance"] = p.max_leftover_distance;
  if (p.has_halves) {
    Json halves = Json::array();
    for (const auto& h : p.halves) {
      Json hj;
      hj["plus"] = h.plus;
      hj["minus"] = h.minus;
      hj["center_plus"] = h.center_plus;
      hj["center_minus"] = h.center_minus;
      hj["certified_radius"] = h.certified_radius;
      hj["degenerate"] = h.degenerate;
      halves.push_back(hj);
    }
    j["halves"] = halves;
  }
  return j;
}

// ---------------------------------------------------------------------------

inline RunOutput run_simulate(const Json& config,
                              std::optional<std::uint64_t> seed, int workers) {
  cfg::require_keys(config, "config",
                    {"graph", "volume", "boundary", "model", "initial",
                     "observable", "times", "t_max", "replicas", "seed"},
                    {"graph", "model", "initial", "observable", "times",
                     "replicas"});
  auto inst = build_instance(config);
  auto params = parse_sim_params(config, seed);
  auto law = parse_initial(config.at("initial"));
  auto f = parse_observable(config.at("observable"), inst.spec.q);
  for (int v : f.support)
    if (inst.ctx->site_index(v) < 0)
      throw ConfigError("observable support must lie inside the volume");

  auto est = estimate_expectation(*inst.ctx, inst.spec, law, f, params, workers);

  std::uint64_t h = config_hash(config);
  Json rep = report_head("simulate", config, params.seed);
  rep["results"]["graph_label"] = inst.graph->label();
  rep["results"]["volume_size"] = inst.ctx->size();
  rep["results"]["series"] = series_json(est);

  RunOutput out;
  out.files.emplace_back("series.csv",
                         series_csv("simulate", h, params.seed, est));
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

inline RunOutput run_relax(const Json& config,
                           std::optional<std::uint64_t> seed, int workers) {
  cfg::require_keys(config, "config",
                    {"graph", "volume", "boundary", "model", "initial",
                     "observable", "times", "t_max", "replicas", "seed", "D"},
                    {"graph", "model", "initial", "observable", "times",
                     "replicas"});
  auto inst = build_instance(config);
  auto params = parse_sim_params(config, seed);
  auto law = parse_initial(config.at("initial"));
  auto f = parse_observable(config.at("observable"), inst.spec.q);
  double D = config.value("D", 1.0);

  auto rel = run_relaxation(*inst.ctx, inst.spec, law, f, params, workers, D);

  std::uint64_t h = config_hash(config);
  Json rep = report_head("relax", config, params.seed);
  Json& res = rep["results"];
  res["exploratory_regime"] = rel.exploratory_regime;
  res["stationary_start"] = rel.stationary_start;
  if (rel.stationary_start) {
    res["stationary_within_noise"] = rel.stationary_within_noise;
  } else {
    auto fit_json = [](const FitResult& fit) {
      Json j;
      j["model"] = fit.model;
      j["inconclusive"] = fit.inconclusive;
      if (!fit.inconclusive) {
        j["c"] = fit.c;
        j["r_squared"] = fit.r_squared;
        j["window_points"] = fit.window_times.size();
      }
      return j;
    };
    res["usable_points"] = rel.fits.usable_points;
    res["exponential_fit"] = fit_json(rel.fits.exponential);
    if (rel.fits.stretched)
      res["stretched_fit"] = fit_json(*rel.fits.stretched);
  }
  res["series"] = series_json(rel.series);

  RunOutput out;
  out.files.emplace_back("series.csv",
                         series_csv("relax", h, params.seed, rel.series));
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

inline RunOutput run_persist(const Json& config,
                             std::optional<std::uint64_t> seed, int workers) {
  cfg::require_keys(config, "config",
                    {"graph", "volume", "boundary", "model", "initial", "theta",
                     "site", "times", "t_max", "replicas", "seed"},
                    {"graph", "model", "initial", "theta", "site", "times",
                     "replicas"});
  auto inst = build_instance(config);
  auto params = parse_sim_params(config, seed);
  auto law = parse_initial(config.at("initial"));
  if (law.kind == InitialLaw::Kind::BernoulliProduct)
    throw ConfigError("persist needs a deterministic initial configuration");
  double theta = cfg::number(config.at("theta"), "theta");
  int site = cfg::integer(config.at("site"), "site");
  if (inst.ctx->site_index(site) < 0)
    throw ConfigError("site must lie inside the volume");

  Rng dummy(0);
  Configuration eta0 = sample_initial(law, *inst.ctx, dummy);
  auto per = run_persistence(*inst.ctx, inst.spec, theta, site, eta0, params,
                             workers);

  std::uint64_t h = config_hash(config);
  Json rep = report_head("persist", config, params.seed);
  Json& res = rep["results"];
  res["applicable"] = per.applicable;
  if (per.applicable) {
    res["lambda"] = per.lambda;
    res["asymptote"] = per.asymptote;
    res["xi0"] = per.xi0;
    res["bound"] = per.bound;
    res["pass"] = per.pass;
    res["all_pass"] = per.all_pass;
    res["series"] = series_json(per.series);
  }

  RunOutput out;
  if (per.applicable) {
    CsvWriter csv("persist", h, params.seed,
                  {"time", "mean", "stderr", "bound", "replicas"});
    for (std::size_t k = 0; k < per.series.times.size(); ++k)
      csv.row({per.series.times[k], per.series.means[k], per.series.stderrs[k],
               per.bound[k], static_cast<double>(per.series.replicas)});
    out.files.emplace_back("series.csv", csv.str());
  }
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  out.exit_code = (!per.applicable || per.all_pass) ? 0 : 2;
  return out;
}

inline Partition parse_partition(const Json& config, const Instance& inst) {
  if (config.contains("blocks")) {
    Partition p;
    for (const auto& blk : config["blocks"]) {
      std::vector<int> b;
      for (const auto& v : blk) b.push_back(cfg::integer(v, "blocks entry"));
      p.blocks.push_back(std::move(b));
      p.centers.push_back(p.blocks.back().front());
    }
    p.radius = 1;
    return p;
  }
  if (config.contains("ell"))
    return partition_cover(*inst.graph, inst.volume,
                           cfg::integer(config["ell"], "ell"));
  throw ConfigError("chain needs a partition: give \"blocks\" or \"ell\"");
}

inline RunOutput run_gap(const Json& config, std::optional<std::uint64_t> seed,
                         int /*workers*/) {
  cfg::require_keys(config, "config",
                    {"graph", "volume", "boundary", "model", "chain", "blocks",
                     "ell", "z", "seed"},
                    {"graph", "model"});
  auto inst = build_instance(config);
  std::string kind = config.value("chain", "full");

  RateMatrix Q = [&] {
    if (kind == "full")
      return build_generator(*inst.graph, inst.volume, inst.bc, inst.spec);
    if (kind == "hat" || kind == "tilde") {
      auto base = build_generator(*inst.graph, inst.volume,
                                  BoundaryCondition::filled(), inst.spec);
      auto p = parse_partition(config, inst);
      return kind == "hat" ? build_hat_chain(base, p)
                           : build_tilde_chain(base, p);
    }
    if (kind == "minimal-boundary") {
      if (!config.contains("z"))
        throw ConfigError("minimal-boundary chain needs \"z\"");
      return build_minimal_boundary_chain(
          *inst.graph, inst.volume, cfg::integer(config["z"], "z"), inst.spec);
    }
    throw ConfigError(
        "chain must be \"full\", \"hat\", \"tilde\" or \"minimal-boundary\"");
  }();

  auto rep_data = spectral_gap(Q);

  Json rep = report_head("gap", config, seed.value_or(config.value("seed", 0ULL)));
  Json& res = rep["results"];
  res["chain"] = kind;
  res["dimension"] = Q.dim();
  res["gap"] = rep_data.gap;
  res["pi_min"] = rep_data.pi_min;
  res["log_sobolev_upper"] = rep_data.log_sobolev_upper;
  res["detailed_balance_residual"] = Q.detailed_balance_residual();
  res["method"] = rep_data.method;
  if (!Q.note.empty()) res["note"] = Q.note;
  if (rep_data.eigenvalues.size() <= 64)
    res["eigenvalues"] = rep_data.eigenvalues;
  else
    res["eigenvalues_head"] = std::vector<double>(
        rep_data.eigenvalues.begin(), rep_data.eigenvalues.begin() + 64);

  RunOutput out;
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

inline RunOutput run_gapscan(const Json& config,
                             std::optional<std::uint64_t> seed, int /*workers*/) {
  cfg::require_keys(config, "config", {"lengths", "q_grid", "D", "seed"},
                    {"lengths", "q_grid"});
  std::vector<int> lengths;
  for (const auto& v : config["lengths"])
    lengths.push_back(cfg::integer(v, "lengths entry"));
  std::vector<double> q_grid;
  for (const auto& v : config["q_grid"])
    q_grid.push_back(cfg::number(v, "q_grid entry"));
  double D = config.value("D", 1.0);

  std::vector<Graph> graphs;
  graphs.reserve(lengths.size());
  std::vector<std::pair<const Graph*, std::vector<int>>> volumes;
  for (int len : lengths) {
    if (len < 2 || len > kDenseSiteCap)
      throw ConfigError("lengths must lie in [2, 14] for dense scans");
    graphs.push_back(build_lattice({len}, false));
  }
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    std::vector<int> all(graphs[i].vertex_count());
    for (int v = 0; v < graphs[i].vertex_count(); ++v) all[v] = v;
    volumes.emplace_back(&graphs[i], all);
  }

  auto scan = run_gap_scan(volumes, q_grid, D);

  std::uint64_t used_seed = seed.value_or(config.value("seed", 0ULL));
  std::uint64_t h = config_hash(config);
  Json rep = report_head("gapscan", config, used_seed);
  Json& res = rep["results"];
  res["fitted_C"] = scan.fitted_C;
  res["envelope_holds"] = scan.envelope_holds;
  res["stability_ok"] = scan.stability_ok;
  res["monotone_in_q_observed"] = scan.monotone_in_q;
  Json stab = Json::array();
  for (auto [q, ratio] : scan.stability) {
    Json s;
    s["q"] = q;
    s["max_over_min"] = ratio;
    stab.push_back(s);
  }
  res["stability"] = stab;

  CsvWriter csv("gapscan", h, used_seed, {"q", "volume_size", "gap"});
  for (const auto& row : scan.rows)
    csv.row({row.q, static_cast<double>(row.volume_size), row.gap});

  RunOutput out;
  out.files.emplace_back("gaps.csv", csv.str());
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

inline RunOutput run_pipeline(const Json& config,
                              std::optional<std::uint64_t> seed, int workers) {
  cfg::require_keys(config, "config",
                    {"model", "t", "epsilon", "speed_factor", "D",
                     "initial_fill", "replicas", "seed", "mc_site_cap"},
                    {"model", "t", "epsilon", "replicas"});
  PipelineInputs in;
  in.q = parse_model(config.at("model")).q;
  in.t = cfg::number(config.at("t"), "t");
  in.epsilon = cfg::number(config.at("epsilon"), "epsilon");
  in.speed_factor = config.value("speed_factor", 5.0);
  in.D = config.value("D", 1);
  in.initial_fill = config.value("initial_fill", 1.0 - in.q * 0.25);
  in.replicas = cfg::integer(config.at("replicas"), "replicas");
  in.seed = seed.value_or(config.value("seed", 0ULL));
  in.workers = workers;
  if (config.contains("mc_site_cap"))
    in.mc_site_cap = cfg::integer(config["mc_site_cap"], "mc_site_cap");
  if (in.t <= 0) throw ConfigError("t must be positive");
  if (in.D != 1 && in.D != 2) throw ConfigError("D must be 1 or 2");

  auto rep_data = run_pipeline_demo(in);

  std::uint64_t h = config_hash(config);
  Json rep = report_head("pipeline", config, in.seed);
  Json& res = rep["results"];
  res["applicable"] = rep_data.applicable;
  res["bound_only"] = rep_data.bound_only;
  res["ell"] = rep_data.ell;
  res["volume_size"] = rep_data.volume_size;
  res["n_blocks"] = rep_data.n_blocks;
  res["min_block_size"] = rep_data.m_min;
  res["max_block_size"] = rep_data.M_max;
  if (!rep_data.bound_only) {
    res["sup_not_in_A"] = rep_data.sup_not_in_A;
    res["measured_abs_mean"] = rep_data.measured_abs_mean;
    res["measured_stderr"] = rep_data.measured_stderr;
  }
  if (rep_data.applicable) {
    res["fitted_c"] = rep_data.fitted_c;
    res["rhs"] = rep_data.rhs;
    res["passed"] = rep_data.passed;
  }

  RunOutput out;
  if (!rep_data.bound_only) {
    out.files.emplace_back("series.csv",
                           series_csv("pipeline", h, in.seed, rep_data.series));
    out.files.emplace_back(
        "exit.csv", series_csv("pipeline exit", h, in.seed, rep_data.not_in_A));
  }
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

inline RunOutput run_partition_cmd(const Json& config,
                                   std::optional<std::uint64_t> seed,
                                   int /*workers*/) {
  cfg::require_keys(config, "config",
                    {"graph", "volume", "ell", "halve", "seed"},
                    {"graph", "ell"});
  auto graph = std::make_shared<Graph>(parse_graph(config.at("graph")));
  auto volume = parse_volume(config.value("volume", Json("all")), *graph);
  int ell = cfg::integer(config.at("ell"), "ell");
  auto p = partition_cover(*graph, volume, ell);
  if (config.value("halve", true)) p = halve_blocks(*graph, p);
  auto chk = check_partition(*graph, volume, p);

  Json rep = report_head("partition", config,
                         seed.value_or(config.value("seed", 0ULL)));
  rep["results"] = partition_json(p);
  rep["results"]["checks"]["disjoint_cover"] = chk.disjoint_cover;
  rep["results"]["checks"]["blocks_connected"] = chk.blocks_connected;
  rep["results"]["checks"]["inner_ball_contained"] = chk.inner_ball_contained;
  rep["results"]["checks"]["outer_ball_contains"] = chk.outer_ball_contains;
  rep["results"]["checks"]["halves_connected"] = chk.halves_connected;
  rep["results"]["checks"]["halves_certified"] = chk.halves_certified;

  RunOutput out;
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// verify: exact re-checks of the quantitative statements on fixed desk
// instances. Random functions are drawn from the given seed, so reports are
// reproducible. Any failed check (as opposed to an inapplicable hypothesis)
// exits with code 2.

inline RunOutput run_verify(const Json& config,
                            std::optional<std::uint64_t> seed, int /*workers*/) {
  cfg::require_keys(config, "config", {"suite", "seed"}, {});
  std::string suite = config.value("suite", "all");
  std::uint64_t used_seed = seed.value_or(config.value("seed", 0ULL));

  Json checks = Json::array();
  bool all_ok = true;
  auto add = [&](const std::string& name, bool ok, Json detail) {
    Json c;
    c["name"] = name;
    c["pass"] = ok;
    c["detail"] = std::move(detail);
    checks.push_back(c);
    all_ok = all_ok && ok;
  };

  bool want_all = suite == "all";
  auto wants = [&](const std::string& s) { return want_all || suite == s; };
  if (!want_all && suite != "lemmas" && suite != "paths" && suite != "drift" &&
      suite != "simpatica" && suite != "reversibility" && suite != "gaper")
    throw ConfigError("unknown verify suite \"" + suite + "\"");

  if (wants("lemmas")) {
    Rng rng = Rng::stream(used_seed, 1);
    int held = 0, total = 0;
    double min_slack = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> muA(4), muB(4), cA(4), cB(4), gfun(16);
      auto normalize = [](std::vector<double>& mu, Rng& r) {
        double sum = 0;
        for (auto& w : mu) {
          w = 0.05 + r.uniform01();
          sum += w;
        }
        for (auto& w : mu) w /= sum;
      };
      normalize(muA, rng);
      normalize(muB, rng);
      for (auto& v : cA) v = rng.bernoulli(0.6) ? 1.0 : rng.uniform01() * 0.5;
      for (auto& v : cB) v = rng.bernoulli(0.6) ? 1.0 : rng.uniform01() * 0.5;
      for (auto& v : gfun) v = 2 * rng.uniform01() - 1;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t a = 0; a < 4; ++a)
          if ((1 - cA[a]) * (1 - cB[b]) != 0.0) gfun[(b << 2) | a] = 0.0;
      auto res = check_tec1(muA, muB, cA, cB, gfun);
      ++total;
      held += res.admissible && res.holds;
      if (res.admissible) min_slack = std::min(min_slack, res.rhs - res.lhs);
    }
    add("tec1-random", held == total,
        {{"held", held}, {"total", total}, {"min_slack", min_slack}});

    held = total = 0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> f(1u << 6);
      for (auto& v : f) v = 2 * rng.uniform01() - 1;
      auto res = check_tec2(3, 3, 0.8, f);
      ++total;
      held += res.applicable && res.holds;
    }
    add("tec2-random", held == total, {{"held", held}, {"total", total}});
    {
      std::vector<double> f(1u << 2, 0.0);
      auto res = check_tec2(1, 1, 0.2, f);
      add("tec2-inapplicable-flag", !res.applicable,
          {{"hypothesis_value", res.hypothesis_value}});
    }

    auto g = build_lattice({7}, false);
    std::vector<int> A{1, 2, 3, 4, 5};
    held = total = 0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> f(1u << 5);
      for (auto& v : f) v = 2 * rng.uniform01() - 1;
      auto res = check_two_block_lemma(g, A, 0, 2, 0.8, f);
      ++total;
      held += res.applicable && res.holds;
    }
    add("two-block-random", held == total, {{"held", held}, {"total", total}});
    {
      std::vector<double> f(1u << 5, 0.0);
      auto res = check_two_block_lemma(g, A, 0, 2, 0.1, f);
      add("two-block-inapplicable-flag", !res.applicable,
          {{"hypothesis_value", res.hypothesis_value}});
    }
  }

  if (wants("paths")) {
    auto g = build_lattice({8}, false);
    std::vector<int> A{1, 2, 3, 4, 5, 6};
    ModelSpec spec{0.5, ConstraintKind::FA1f};
    VolumeContext ctx(g, A, BoundaryCondition::filled_except_at(0));
    bool lengths_ok = true;
    for (int i = 2; i <= 5; ++i) {
      Configuration sigma(ctx, 1);
      std::vector<int> chain;
      for (int j = 1; j <= i; ++j) chain.push_back(6 - j);
      sigma.set_vertex(6 - i, 0);
      auto path = vacancy_transport_path(spec, sigma, 6, chain);
      lengths_ok =
          lengths_ok && path.size() == static_cast<std::size_t>(4 * i - 5) + 1;
    }
    add("transport-path-lengths", lengths_ok, {{"i_range", "2..5"}});
    for (double q : {0.5, 0.8}) {
      auto res = congestion_constant(g, A, 0, 3, {q, ConstraintKind::FA1f});
      add("congestion-q" + fmt_double(q), res.holds,
          {{"K", res.K},
           {"K_bound", res.K_bound},
           {"K_prime", res.K_prime},
           {"K_prime_bound", res.K_prime_bound},
           {"paths", res.paths}});
    }
  }

  if (wants("drift")) {
    auto g = build_lattice({9}, false);
    std::vector<int> volume{1, 2, 3, 4, 5, 6, 7};
    std::vector<double> times{0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
    for (auto [theta, q] : {std::pair{2.0, 0.8}, {1.5, 0.75}, {2.5, 0.9}}) {
      ModelSpec spec{q, ConstraintKind::FA1f};
      auto Q = build_generator(g, volume, BoundaryCondition::empty(), spec);
      Configuration eta(*Q.ctx, 1);
      auto res = check_xi_drift(Q, 4, theta, eta, times);
      add("xi-drift-theta" + fmt_double(theta) + "-q" + fmt_double(q),
          res.applicable && res.all_hold,
          {{"lambda", res.lambda}, {"asymptote", res.asymptote}});
    }
    ModelSpec off{0.5, ConstraintKind::FA1f};
    auto Q = build_generator(g, volume, BoundaryCondition::empty(), off);
    Configuration eta(*Q.ctx, 1);
    auto res = check_xi_drift(Q, 4, 2.0, eta, times);
    add("xi-drift-inapplicable-flag", !res.applicable, Json::object());
  }

  if (wants("simpatica")) {
    auto g = build_lattice({5}, false);
    std::vector<int> volume{1, 2, 3};
    ModelSpec spec{0.8, ConstraintKind::FA1f};
    auto Q = build_generator(g, volume, BoundaryCondition::empty(), spec);
    Partition p;
    p.blocks = {volume};
    p.centers = {1};
    p.radius = 1;
    auto f = Observable::vacancy_at(2, 0.8);
    auto res = check_simpatica(Q, p, dirac_distribution(Q, 0), f,
                               {0.5, 1.0, 2.0, 4.0, 8.0});
    add("simpatica-3site", res.all_hold,
        {{"gamma_hat", res.gamma_hat},
         {"alpha_hat_upper", res.alpha_hat_upper},
         {"lhs", res.lhs},
         {"rhs", res.rhs}});
  }

  if (wants("reversibility")) {
    auto g = build_lattice({7}, false);
    std::vector<int> volume{1, 2, 3, 4, 5};
    double worst = 0;
    for (double q : {0.3, 0.5, 0.8, 0.99}) {
      ModelSpec fa{q, ConstraintKind::FA1f};
      ModelSpec tw{q, ConstraintKind::TwoWithinTwo};
      auto track = [&](const RateMatrix& Q) {
        worst = std::max(worst, Q.detailed_balance_residual());
      };
      track(build_generator(g, volume, BoundaryCondition::empty(), fa));
      track(build_generator(g, volume, BoundaryCondition::filled(), fa));
      track(build_generator(g, volume, BoundaryCondition::empty(), tw));
      auto Qfill = build_generator(g, volume, BoundaryCondition::filled(), fa);
      Partition two;
      two.blocks = {{1, 2}, {3, 4, 5}};
      two.centers = {1, 4};
      two.radius = 1;
      track(build_hat_chain(Qfill, two));
      track(build_tilde_chain(Qfill, two));
      track(build_minimal_boundary_chain(g, volume, 0, fa));
    }
    add("detailed-balance", worst < 1e-12, {{"max_residual", worst}});
  }

  if (wants("gaper")) {
    auto g = build_lattice({8}, false);
    std::vector<int> volume(8);
    for (int i = 0; i < 8; ++i) volume[i] = i;
    std::vector<std::pair<std::vector<int>, int>> family;
    for (int len = 1; len <= 7; ++len) {
      std::vector<int> A;
      for (int v = 8 - len; v < 8; ++v) A.push_back(v);
      family.emplace_back(A, 7 - len);
    }
    auto res = hat_gap_pipeline(g, volume, {0.9}, 1.0, 3.0, family);
    add("gaper-q0.9", res.per_q[0].hypothesis_holds && res.per_q[0].relation_holds,
        {{"hat_gap", res.per_q[0].hat_gap},
         {"min_minimal_gap", res.per_q[0].min_minimal_gap}});
    auto g4 = build_lattice({4}, false);
    auto flagged = hat_gap_pipeline(g4, {0, 1, 2, 3}, {0.3}, 1.0, 3.0, {});
    add("gaper-hypothesis-flag", !flagged.per_q[0].hypothesis_holds,
        {{"hypothesis_value", flagged.per_q[0].hypothesis_value}});
  }

  Json rep = report_head("verify", config, used_seed);
  rep["results"]["suite"] = suite;
  rep["results"]["checks"] = checks;
  rep["results"]["all_pass"] = all_ok;

  RunOutput out;
  out.files.emplace_back("report.json", rep.dump(2) + "\n");
  out.exit_code = all_ok ? 0 : 2;
  return out;
}

}  // namespace driver

inline RunOutput run_subcommand(const std::string& cmd, const Json& config,
                                std::optional<std::uint64_t> seed, int workers) {
  auto start = std::chrono::steady_clock::now();
  RunOutput out;
  if (cmd == "simulate")
    out = driver::run_simulate(config, seed, workers);
  else if (cmd == "relax")
    out = driver::run_relax(config, seed, workers);
  else if (cmd == "persist")
    out = driver::run_persist(config, seed, workers);
  else if (cmd == "gap")
    out = driver::run_gap(config, seed, workers);
  else if (cmd == "gapscan")
    out = driver::run_gapscan(config, seed, workers);
  else if (cmd == "verify")
    out = driver::run_verify(config, seed, workers);
  else if (cmd == "pipeline")
    out = driver::run_pipeline(config, seed, workers);
  else if (cmd == "partition")
    out = driver::run_partition_cmd(config, seed, workers);
  else
    throw ConfigError("unknown subcommand \"" + cmd + "\"");

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  std::ostringstream log;
  log << cmd << ": wall clock " << secs << " s, exit " << out.exit_code;
  out.log = log.str();
  return out;
}

}  // namespace kcmlab
