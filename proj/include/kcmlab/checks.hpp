#pragma once

// Numerical verification of the quantitative bounds: the restricted-chain
// comparison inequality, the out-of-equilibrium xi drift bound, the
// finite-volume decay bound, the two variance lemmas, the two-block variance
// bound, the vacancy transport paths and their congestion constant, and the
// hat-gap / minimal-boundary-gap comparison.
//
// Everything here is exact arithmetic over enumerated state spaces; Monte
// Carlo enters only through caller-supplied measured values.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "kcmlab/exact.hpp"

namespace kcmlab {

inline constexpr double kCheckSlack = 1e-9;  // tolerance on exact comparisons

// ---------------------------------------------------------------------------
// xi drift: E_eta(theta^{xi_t}) <= theta^{xi(eta)} e^{-lambda t} + asymptote,
// lambda = (theta^2-1)/theta * (q - theta/(theta+1)),
// asymptote = q / (q(theta+1) - theta); needs theta > 1, q > theta/(theta+1)
// and an empty boundary.

struct XiDriftResult {
  bool applicable = false;
  double lambda = 0.0, asymptote = 0.0;
  int xi0 = 0;
  std::vector<double> times, u, bound;
  std::vector<bool> holds;
  bool all_hold = false;
};

inline double xi_drift_lambda(double theta, double q) {
  return (theta * theta - 1.0) / theta * (q - theta / (theta + 1.0));
}
inline double xi_drift_asymptote(double theta, double q) {
  return q / (q * (theta + 1.0) - theta);
}

inline XiDriftResult check_xi_drift(const RateMatrix& Q, int x_vertex,
                                    double theta, const Configuration& eta0,
                                    const std::vector<double>& times) {
  if (Q.ctx->boundary_condition().kind != BoundaryCondition::Kind::Empty)
    throw std::invalid_argument("xi drift check requires an empty boundary");
  XiDriftResult res;
  res.times = times;
  if (!(theta > 1.0) || !(Q.spec.q > theta / (theta + 1.0))) return res;
  res.applicable = true;
  res.lambda = xi_drift_lambda(theta, Q.spec.q);
  res.asymptote = xi_drift_asymptote(theta, Q.spec.q);

  Configuration scratch(*Q.ctx);
  std::vector<double> f(Q.dim());
  for (int a = 0; a < Q.dim(); ++a) {
    state_to_config(Q.idx.states[a], scratch);
    f[a] = std::pow(theta, xi(scratch, x_vertex));
  }
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < eta0.occ.size(); ++i)
    bits |= static_cast<std::uint32_t>(eta0.occ[i]) << i;
  res.xi0 = xi(eta0, x_vertex);
  res.u = transient_expectation(Q, dirac_distribution(Q, bits), f, times);
  res.all_hold = true;
  for (std::size_t k = 0; k < times.size(); ++k) {
    double b = std::pow(theta, res.xi0) * std::exp(-res.lambda * times[k]) +
               res.asymptote;
    res.bound.push_back(b);
    res.holds.push_back(res.u[k] <= b + kCheckSlack);
    res.all_hold = res.all_hold && res.holds.back();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Restricted-chain comparison: for pi(f) = 0,
//   |E_nu(f(X_t))| <= |hatpi(f)|
//     + ||f||_inf (4 P_nu(A_t^c) + exp{-gamma t/2 + e^{-2t/alpha} log(1/hatpi*)})
// with alpha replaced by its proven upper bound gamma^{-1} log(1/hatpi*),
// which only enlarges the right-hand side.

struct SimpaticaResult {
  std::vector<double> times, lhs, rhs, p_exit;
  double hat_f_mean = 0.0;
  double gamma_hat = 0.0, alpha_hat_upper = 0.0, pi_hat_min = 0.0;
  std::vector<bool> holds;
  bool all_hold = false;
};

inline SimpaticaResult check_simpatica(const RateMatrix& Q_full,
                                       const Partition& p,
                                       const std::vector<double>& nu,
                                       const Observable& f,
                                       const std::vector<double>& times) {
  auto f_states = observable_on_states(Q_full, f);
  double pi_f = 0.0;
  for (int a = 0; a < Q_full.dim(); ++a) pi_f += Q_full.pi[a] * f_states[a];
  if (std::abs(pi_f) > 1e-12)
    throw std::invalid_argument("comparison inequality needs pi(f) = 0");

  SimpaticaResult res;
  res.times = times;
  res.lhs = transient_expectation(Q_full, nu, f_states, times);
  for (double& v : res.lhs) v = std::abs(v);

  // survival in the two-vacancies-per-block component
  auto A_states = component_states(*Q_full.ctx, p, 2);
  std::vector<char> allowed(Q_full.dim(), 0);
  for (std::uint32_t s : A_states) allowed[Q_full.idx.pos[s]] = 1;
  auto survival = taboo_survival(Q_full, allowed, nu, times);
  for (double s : survival) res.p_exit.push_back(1.0 - s);

  RateMatrix hat = build_hat_chain(Q_full, p);
  auto rep = spectral_gap(hat);
  res.gamma_hat = rep.gap;
  res.pi_hat_min = rep.pi_min;
  res.alpha_hat_upper = log_sobolev_upper(rep);

  auto f_hat = observable_on_states(hat, f);
  for (int a = 0; a < hat.dim(); ++a) res.hat_f_mean += hat.pi[a] * f_hat[a];

  const double fnorm = f.norm_inf();
  const double log_inv_pistar = std::log(1.0 / res.pi_hat_min);
  res.all_hold = true;
  for (std::size_t k = 0; k < times.size(); ++k) {
    double t = times[k];
    double expo = -res.gamma_hat * t / 2.0 +
                  std::exp(-2.0 * t / res.alpha_hat_upper) * log_inv_pistar;
    double rhs = std::abs(res.hat_f_mean) +
                 fnorm * (4.0 * res.p_exit[k] + std::exp(expo));
    res.rhs.push_back(rhs);
    res.holds.push_back(res.lhs[k] <= rhs + kCheckSlack);
    res.all_hold = res.all_hold && res.holds.back();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Finite-volume decay bound, assembled from measured quantities. Applicable
// only under n e^{-q m} < 1/2.

struct InizioInputs {
  double n_blocks = 0;      // n
  double m_min = 0;         // min block size
  double M_max = 0;         // max block size
  double volume_size = 0;   // |Lambda|
  double q = 0;
  double f_norm_inf = 1.0;
  double sup_not_in_A = 0;  // measured sup_{s<=t} P(sigma_s not in A)
  double c = 1.0;           // fitted constant
};

struct InizioResult {
  bool applicable = false;
  double small_component_term = 0, exit_term = 0, ring_term = 0, relax_term = 0;
  double rhs = std::numeric_limits<double>::infinity();
};

inline InizioResult evaluate_inizio_bound(const InizioInputs& in, double t) {
  InizioResult res;
  double ne = in.n_blocks * std::exp(-in.q * in.m_min);
  if (!(ne < 0.5)) return res;  // hypothesis fails: flagged, not thrown
  res.applicable = true;
  res.small_component_term = ne;
  res.exit_term = t * in.sup_not_in_A;
  res.ring_term = in.volume_size * std::exp(-t / 3.0);
  res.relax_term = std::exp(-t / in.c + in.c * in.volume_size *
                                            std::exp(-t / (in.c * in.M_max)));
  res.rhs = in.c * in.f_norm_inf *
            (res.small_component_term + res.exit_term + res.ring_term +
             res.relax_term);
  return res;
}

// ---------------------------------------------------------------------------
// Constrained two-block variance inequality (abstract form). Layout: states
// are (nA + nB)-bit masks with the A sites in the low bits. mu_A and mu_B are
// arbitrary strictly positive measures on the two factors; c_A and c_B are
// [0,1]-valued tables over the factor they are supported on. Admissibility
// (1 - c_A)(1 - c_B) g = 0 is checked exactly.

struct Tec1Result {
  bool admissible = false;
  std::uint32_t witness = 0;  // a state violating admissibility
  double lhs = 0, rhs = 0;
  bool holds = false;
};

inline Tec1Result check_tec1(const std::vector<double>& mu_A,
                             const std::vector<double>& mu_B,
                             const std::vector<double>& c_A,
                             const std::vector<double>& c_B,
                             const std::vector<double>& g) {
  const int nA = std::bit_width(mu_A.size()) - 1;
  const int nB = std::bit_width(mu_B.size()) - 1;
  const std::size_t NA = mu_A.size(), NB = mu_B.size();
  if ((std::size_t{1} << nA) != NA || (std::size_t{1} << nB) != NB)
    throw std::invalid_argument("factor measure sizes must be powers of two");
  if (g.size() != NA * NB) throw std::invalid_argument("g table size mismatch");

  Tec1Result res;
  auto idx = [&](std::size_t a, std::size_t b) { return (b << nA) | a; };
  for (std::size_t b = 0; b < NB; ++b)
    for (std::size_t a = 0; a < NA; ++a) {
      double bad = (1.0 - c_A[a]) * (1.0 - c_B[b]) * g[idx(a, b)];
      if (std::abs(bad) > 1e-14) {
        res.witness = static_cast<std::uint32_t>(idx(a, b));
        return res;  // admissible stays false
      }
    }
  res.admissible = true;

  // product measure
  double mean = 0, second = 0, mcA = 0, mcB = 0;
  for (std::size_t b = 0; b < NB; ++b)
    for (std::size_t a = 0; a < NA; ++a) {
      double w = mu_A[a] * mu_B[b];
      double v = g[idx(a, b)];
      mean += w * v;
      second += w * v * v;
      mcA += w * c_A[a];
      mcB += w * c_B[b];
    }
  res.lhs = second - mean * mean;

  // E[c_B^2 Var_{mu_A}(g)]: variance over a at fixed b, etc.
  double term = 0;
  for (std::size_t b = 0; b < NB; ++b) {
    double m1 = 0, m2 = 0;
    for (std::size_t a = 0; a < NA; ++a) {
      double v = g[idx(a, b)];
      m1 += mu_A[a] * v;
      m2 += mu_A[a] * v * v;
    }
    term += mu_B[b] * c_B[b] * c_B[b] * (m2 - m1 * m1);
  }
  for (std::size_t a = 0; a < NA; ++a) {
    double m1 = 0, m2 = 0;
    for (std::size_t b = 0; b < NB; ++b) {
      double v = g[idx(a, b)];
      m1 += mu_B[b] * v;
      m2 += mu_B[b] * v * v;
    }
    term += mu_A[a] * c_A[a] * c_A[a] * (m2 - m1 * m1);
  }
  res.rhs = 12.0 * term + 8.0 * std::max(1.0 - mcA, 1.0 - mcB) * res.lhs;
  res.holds = res.lhs <= res.rhs + kCheckSlack;
  return res;
}

// ---------------------------------------------------------------------------
// FA1f two-block variance inequality on the ergodic component. Lambda is the
// disjoint union of A and B; c_A indicates a vacancy in A. f lives on the
// component (>= 1 vacancy in Lambda) and is extended by zero outside; its
// component mean is removed internally. Hypothesis:
// max(1 - mu(c_A), 1 - mu(c_B)) < 1/16.

struct Tec2Result {
  bool applicable = false;
  double hypothesis_value = 0;
  double lhs = 0, rhs = 0;
  bool holds = false;
};

inline Tec2Result check_tec2(int nA, int nB, double q,
                             std::vector<double> f_full) {
  const int n = nA + nB;
  const std::size_t N = std::size_t{1} << n;
  if (f_full.size() != N) throw std::invalid_argument("f table size mismatch");
  const double p = 1.0 - q;

  Tec2Result res;
  res.hypothesis_value = std::max(std::pow(p, nA), std::pow(p, nB));
  if (!(res.hypothesis_value < 1.0 / 16.0)) return res;
  res.applicable = true;

  const std::uint32_t maskA = (1u << nA) - 1u;
  const std::uint32_t maskB = ((1u << n) - 1u) & ~maskA;
  const std::uint32_t all_filled = (1u << n) - 1u;

  auto weight = [&](std::uint32_t s) { return product_weight(s, n, q); };
  auto in_component = [&](std::uint32_t s) { return s != all_filled; };
  auto cA = [&](std::uint32_t s) { return (maskA & ~s) != 0u ? 1.0 : 0.0; };
  auto cB = [&](std::uint32_t s) { return (maskB & ~s) != 0u ? 1.0 : 0.0; };

  // center f on the component, then extend by zero
  double comp_mass = 0, comp_mean = 0;
  for (std::uint32_t s = 0; s < N; ++s)
    if (in_component(s)) {
      comp_mass += weight(s);
      comp_mean += weight(s) * f_full[s];
    }
  comp_mean /= comp_mass;
  std::vector<double> ftilde(N, 0.0);
  for (std::uint32_t s = 0; s < N; ++s)
    if (in_component(s)) ftilde[s] = f_full[s] - comp_mean;

  // LHS: variance under the conditioned measure (mean is zero now)
  double lhs = 0;
  for (std::uint32_t s = 0; s < N; ++s)
    if (in_component(s)) lhs += weight(s) / comp_mass * ftilde[s] * ftilde[s];
  res.lhs = lhs;

  // Var over the A factor at fixed B part (and vice versa), of the extension
  const std::uint32_t NB = 1u << nB;
  const std::uint32_t NA = 1u << nA;
  std::vector<double> varA(NB, 0.0), varB(NA, 0.0);
  for (std::uint32_t b = 0; b < NB; ++b) {
    double m1 = 0, m2 = 0;
    for (std::uint32_t a = 0; a < NA; ++a) {
      std::uint32_t s = (b << nA) | a;
      double w = product_weight(a, nA, q);
      m1 += w * ftilde[s];
      m2 += w * ftilde[s] * ftilde[s];
    }
    varA[b] = m2 - m1 * m1;
  }
  for (std::uint32_t a = 0; a < NA; ++a) {
    double m1 = 0, m2 = 0;
    for (std::uint32_t b = 0; b < NB; ++b) {
      std::uint32_t s = (b << nA) | a;
      double w = product_weight(b, nB, q);
      m1 += w * ftilde[s];
      m2 += w * ftilde[s] * ftilde[s];
    }
    varB[a] = m2 - m1 * m1;
  }

  double rhs = 0;
  for (std::uint32_t s = 0; s < N; ++s)
    if (in_component(s))
      rhs += weight(s) / comp_mass *
             (cB(s) * varA[s >> nA] + cA(s) * varB[s & maskA]);
  res.rhs = 24.0 * rhs;
  res.holds = res.lhs <= res.rhs + kCheckSlack;
  return res;
}

// ---------------------------------------------------------------------------
// Vacancy chains toward a boundary vertex.

// Deterministic chain x_1, ..., x_n with d(x_j, x) = j, d(x_j, z) = d(x,z)-j,
// consecutive sites adjacent, staying inside A (the last site may be z).
// Lowest vertex id on ties.
inline std::vector<int> vacancy_chain(const Graph& g, const std::vector<int>& A,
                                      int z, int x, int max_len) {
  std::vector<char> in(g.vertex_count(), 0);
  for (int v : A) in[v] = 1;
  in[z] = 1;
  auto dz = g.distances_from(z);
  auto dx = g.distances_from(x);
  int n = std::min(max_len, dz[x]);
  std::vector<int> chain;
  int cur = x;
  for (int j = 1; j <= n; ++j) {
    int pick = -1;
    for (int w : g.neighbors(cur))
      if (in[w] && dx[w] == j && dz[w] == dz[x] - j && (pick < 0 || w < pick))
        pick = w;
    if (pick < 0)
      throw std::invalid_argument("no vacancy chain toward z inside A");
    chain.push_back(pick);
    cur = pick;
  }
  return chain;
}

// Path of configurations from sigma to sigma^x along a vacancy chain whose
// last site is empty: the vacancy walks to x_1, the flip at x happens, the
// vacancy walks back. Length 4i-5 flips for a chain of length i >= 2, a
// single flip for i = 1. Every step is validated as a legal flip and every
// intermediate differs from sigma on at most three sites.
inline std::vector<Configuration> vacancy_transport_path(
    const ModelSpec& spec, const Configuration& sigma, int x_vertex,
    const std::vector<int>& chain) {
  const VolumeContext& ctx = *sigma.ctx;
  const int i = static_cast<int>(chain.size());
  if (i < 1) throw std::invalid_argument("empty vacancy chain");

  auto value_at = [&](const Configuration& s, int v) -> int {
    int idx = ctx.site_index(v);
    if (idx >= 0) return s.occ[idx];
    if (ctx.is_boundary(v)) return ctx.boundary_value(v);
    throw std::invalid_argument("chain vertex outside volume and boundary");
  };

  // chain sanity: consecutive adjacency, starts next to x, prefix filled,
  // last site empty
  {
    int prev = x_vertex;
    for (int v : chain) {
      bool adj = false;
      for (int w : ctx.graph().neighbors(prev)) adj |= (w == v);
      if (!adj) throw std::invalid_argument("chain sites must be consecutive");
      prev = v;
    }
    for (int j = 0; j + 1 < i; ++j)
      if (value_at(sigma, chain[j]) != 1)
        throw std::invalid_argument("chain interior must be filled");
    if (value_at(sigma, chain[i - 1]) != 0)
      throw std::invalid_argument("chain must end at an empty site");
  }

  std::vector<Configuration> path{sigma};
  auto flip = [&](int v) {
    Configuration next = path.back();
    int idx = ctx.site_index(v);
    if (idx < 0) throw std::invalid_argument("path flip outside the volume");
    if (!constraint(spec, next, idx))
      throw std::logic_error("vacancy transport produced an illegal flip");
    next.occ[idx] ^= 1;
    path.push_back(std::move(next));
  };

  if (i == 1) {
    flip(x_vertex);  // x_1 empty makes the flip at x directly legal
    return path;
  }
  // walk the vacancy to x_1 (chain is 0-based: chain[j] = x_{j+1})
  flip(chain[i - 2]);
  for (int k = i - 3; k >= 0; --k) {
    flip(chain[k]);
    flip(chain[k + 1]);
  }
  flip(x_vertex);
  // walk it back
  for (int k = 0; k <= i - 3; ++k) {
    flip(chain[k + 1]);
    flip(chain[k]);
  }
  flip(chain[i - 2]);

  // postconditions
  const std::size_t expected = static_cast<std::size_t>(4 * i - 5) + 1;
  if (path.size() != expected)
    throw std::logic_error("vacancy transport path has wrong length");
  for (const auto& cfg : path) {
    int diff = 0;
    for (std::size_t s = 0; s < cfg.occ.size(); ++s)
      diff += (cfg.occ[s] != sigma.occ[s]);
    if (diff > 3)
      throw std::logic_error("vacancy transport path strays too far from sigma");
  }
  return path;
}

// ---------------------------------------------------------------------------
// Congestion constant of the canonical flow defined by the transport paths,
// on a fully enumerated minimal-boundary instance.

struct CongestionResult {
  double K = 0;
  double K_bound = 0;        // 8 / q^3
  double K_prime = 0;
  double K_prime_bound = 0;  // sup_u |B(u, ell)|
  bool holds = false;
  long long paths = 0;
};

inline CongestionResult congestion_constant(const Graph& g,
                                            const std::vector<int>& A, int z,
                                            int ell, const ModelSpec& spec) {
  if (!(spec.q > 0.0)) throw std::invalid_argument("congestion needs q > 0");
  if (A.size() > 16) throw std::invalid_argument("instance too large to enumerate");
  auto ctx = VolumeContext(g, A, BoundaryCondition::filled_except_at(z));
  const int n = ctx.size();
  const std::uint32_t N = 1u << n;
  const double p = spec.p();

  // chains per site
  std::vector<std::vector<int>> chains(n);
  for (int s = 0; s < n; ++s)
    chains[s] = vacancy_chain(g, ctx.volume(), z, ctx.vertex_of(s), ell);

  auto vac = [&](std::uint32_t st) { return n - std::popcount(st); };
  auto bits_of = [&](const Configuration& c) {
    std::uint32_t b = 0;
    for (int j = 0; j < n; ++j) b |= static_cast<std::uint32_t>(c.occ[j]) << j;
    return b;
  };

  // load[(eta, x)] and users[(eta, flip-site)] -> distinct x
  std::map<std::pair<std::uint32_t, int>, double> load;
  std::map<std::pair<std::uint32_t, int>, std::set<int>> users;

  CongestionResult res;
  Configuration sigma(ctx);
  for (int s = 0; s < n; ++s) {
    const auto& chain = chains[s];
    if (chain.empty()) continue;
    for (std::uint32_t st = 0; st < N; ++st) {
      state_to_config(st, sigma);
      // xi along the chain; a trailing boundary site z counts as empty
      int xi_chain = 0;
      for (std::size_t j = 0; j < chain.size(); ++j) {
        int idx = ctx.site_index(chain[j]);
        int val = idx >= 0 ? sigma.occ[idx] : 0;
        if (val == 0) {
          xi_chain = static_cast<int>(j) + 1;
          break;
        }
      }
      if (xi_chain == 0) continue;  // c~_x(sigma) = 0: no path
      std::vector<int> prefix(chain.begin(), chain.begin() + xi_chain);
      auto path = vacancy_transport_path(spec, sigma, ctx.vertex_of(s), prefix);
      ++res.paths;
      for (std::size_t j = 0; j + 1 < path.size(); ++j) {
        std::uint32_t eta = bits_of(path[j]);
        std::uint32_t nxt = bits_of(path[j + 1]);
        int flip_site = std::countr_zero(eta ^ nxt);
        int dvac = vac(eta) - vac(st);
        load[{eta, s}] += std::pow(p / spec.q, dvac);
        users[{eta, flip_site}].insert(s);
      }
    }
  }

  for (const auto& [key, w] : load) res.K = std::max(res.K, w);
  for (const auto& [key, xs] : users)
    res.K_prime = std::max(res.K_prime, static_cast<double>(xs.size()));
  res.K_bound = 8.0 / (spec.q * spec.q * spec.q);
  long long ball_max = 0;
  for (int v : ctx.volume())
    ball_max = std::max<long long>(ball_max, g.ball(v, ell).size());
  res.K_prime_bound = static_cast<double>(ball_max);
  res.holds = res.K <= res.K_bound + kCheckSlack &&
              res.K_prime <= res.K_prime_bound + kCheckSlack;
  return res;
}

// ---------------------------------------------------------------------------
// Two-block variance bound from vacancy-chain events: with
// c~_x = 1_{some chain site empty} and
// sup_x mu(1 - c~_x) * sup_y |{x : Delta_x or x covers y}| < 1/4,
//   Var_{mu_A}(f) <= 4 sum_x mu_A(c~_x Var_x(f)).

struct TwoBlockResult {
  bool applicable = false;
  double hypothesis_value = 0;
  double lhs = 0, rhs = 0;
  bool holds = false;
};

inline TwoBlockResult check_two_block_lemma(const Graph& g,
                                            const std::vector<int>& A, int z,
                                            int ell, double q,
                                            const std::vector<double>& f) {
  auto ctx = VolumeContext(g, A, BoundaryCondition::filled_except_at(z));
  const int n = ctx.size();
  const std::uint32_t N = 1u << n;
  if (f.size() != N) throw std::invalid_argument("f table size mismatch");
  const double p = 1.0 - q;

  std::vector<std::vector<int>> chains(n);  // delta_x as in-volume site lists
  std::vector<bool> trivially_allowed(n, false);
  double sup_mu_blocked = 0.0;
  for (int s = 0; s < n; ++s) {
    auto chain = vacancy_chain(g, ctx.volume(), z, ctx.vertex_of(s), ell);
    bool reaches_z = !chain.empty() && chain.back() == z;
    if (reaches_z) {
      trivially_allowed[s] = true;  // E_x is the whole space
      chain.pop_back();
    } else {
      sup_mu_blocked = std::max(sup_mu_blocked, std::pow(p, chain.size()));
    }
    for (int v : chain) chains[s].push_back(ctx.site_index(v));
  }
  // overlap count: how many (Delta_x union {x}) contain a given site
  int sup_cover = 0;
  for (int y = 0; y < n; ++y) {
    int c = 0;
    for (int s = 0; s < n; ++s) {
      bool covers = (s == y);
      if (!trivially_allowed[s])
        for (int v : chains[s]) covers |= (v == y);
      c += covers;
    }
    sup_cover = std::max(sup_cover, c);
  }

  TwoBlockResult res;
  res.hypothesis_value = sup_mu_blocked * sup_cover;
  if (!(res.hypothesis_value < 0.25)) return res;
  res.applicable = true;

  auto weight = [&](std::uint32_t s) { return product_weight(s, n, q); };
  double mean = 0, second = 0;
  for (std::uint32_t st = 0; st < N; ++st) {
    mean += weight(st) * f[st];
    second += weight(st) * f[st] * f[st];
  }
  res.lhs = second - mean * mean;

  double rhs = 0;
  for (int s = 0; s < n; ++s) {
    for (std::uint32_t st = 0; st < N; ++st) {
      // c~_x(st)
      bool ok = trivially_allowed[s];
      if (!ok)
        for (int v : chains[s])
          if ((st >> v & 1u) == 0u) {
            ok = true;
            break;
          }
      if (!ok) continue;
      rhs += weight(st) * local_variance(q, f, s, st);
    }
  }
  // local_variance sums each x-pair twice (once per x-value); the product
  // weight splits as w = w_rest * (p or q), so summing over all states
  // counts mu_A(c~_x Var_x f) exactly once
  res.rhs = 4.0 * rhs;
  res.holds = res.lhs <= res.rhs + kCheckSlack;
  return res;
}

// ---------------------------------------------------------------------------
// Hat gap vs minimal-boundary gaps, plus the q-envelope fit.

struct GaperCheck {
  double q = 0;
  double hypothesis_value = 0;  // 8 p^{diam/3}
  bool hypothesis_holds = false;
  double hat_gap = 0;
  double min_minimal_gap = 0;  // over the tested (A, z) family
  bool relation_holds = false; // hat_gap >= min_minimal_gap / 48
};

struct HatGapPipelineResult {
  std::vector<GaperCheck> per_q;
  double fitted_C = 0;  // min_q hat_gap * log(2/q)^{D+1} / q^{D+4}
  bool envelope_holds = false;
  double D = 1, k_growth = 0;
};

inline HatGapPipelineResult hat_gap_pipeline(
    const Graph& g, const std::vector<int>& volume,
    const std::vector<double>& q_grid, double D, double k_growth,
    const std::vector<std::pair<std::vector<int>, int>>& tested_Az) {
  HatGapPipelineResult out;
  out.D = D;
  out.k_growth = k_growth;
  const int diam = g.diameter_of(volume);

  out.fitted_C = std::numeric_limits<double>::infinity();
  for (double q : q_grid) {
    ModelSpec spec{q, ConstraintKind::FA1f};
    GaperCheck row;
    row.q = q;
    row.hat_gap = spectral_gap(build_hat_single(g, volume, spec)).gap;
    row.hypothesis_value = 8.0 * std::pow(1.0 - q, diam / 3.0);
    row.hypothesis_holds = row.hypothesis_value < 0.5;
    if (row.hypothesis_holds && !tested_Az.empty()) {
      row.min_minimal_gap = std::numeric_limits<double>::infinity();
      for (const auto& [A, z] : tested_Az) {
        auto QA = build_minimal_boundary_chain(g, A, z, spec);
        row.min_minimal_gap = std::min(row.min_minimal_gap, spectral_gap(QA).gap);
      }
      row.relation_holds = row.hat_gap >= row.min_minimal_gap / 48.0 - kCheckSlack;
    }
    out.fitted_C = std::min(out.fitted_C,
                            row.hat_gap * std::pow(std::log(2.0 / q), D + 1.0) /
                                std::pow(q, D + 4.0));
    out.per_q.push_back(row);
  }
  out.envelope_holds = true;
  for (const auto& row : out.per_q) {
    double envelope = out.fitted_C * std::pow(row.q, D + 4.0) /
                      std::pow(std::log(2.0 / row.q), D + 1.0);
    if (row.hat_gap < envelope - kCheckSlack) out.envelope_holds = false;
  }
  return out;
}

}  // namespace kcmlab
