#pragma once

// Exact finite-state chain analysis.
//
// A chain state is a bitmask over the volume's sites (bit i = occupation of
// site i in the volume's sorted vertex order). Chains may be restricted to a
// mask (an ergodic-component style subset of states); transitions are then
// kept only between mask states and the stationary measure is the Bernoulli
// product conditioned on the mask.
//
// Chain kinds built here:
//   - full finite-volume generator with an arbitrary boundary condition,
//   - the hat chain: filled-exterior rates restricted to "at least one
//     vacancy per block",
//   - the tilde chain: block-local filled-exterior rates on the same mask
//     (a tensor product of per-block hat chains),
//   - the minimal-boundary chain: full state space, exterior filled except
//     at one boundary vertex.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "kcmlab/model.hpp"

namespace kcmlab {

inline constexpr int kDenseSiteCap = 14;      // dense spectra up to 2^14 states
inline constexpr int kIterativeSiteCap = 20;  // gap-only mode up to 2^20

struct StateIndex {
  int n_sites = 0;
  bool masked = false;
  std::vector<std::uint32_t> states;  // chain index -> bitmask, ascending
  std::vector<std::int32_t> pos;      // bitmask -> chain index or -1

  int dim() const { return static_cast<int>(states.size()); }

  static StateIndex full(int n) {
    StateIndex s;
    s.n_sites = n;
    s.states.resize(std::size_t{1} << n);
    std::iota(s.states.begin(), s.states.end(), 0u);
    s.pos.resize(s.states.size());
    std::iota(s.pos.begin(), s.pos.end(), 0);
    return s;
  }

  static StateIndex restricted(int n, std::vector<std::uint32_t> mask_states) {
    StateIndex s;
    s.n_sites = n;
    s.masked = true;
    std::sort(mask_states.begin(), mask_states.end());
    s.states = std::move(mask_states);
    s.pos.assign(std::size_t{1} << n, -1);
    for (int i = 0; i < s.dim(); ++i) s.pos[s.states[i]] = i;
    return s;
  }
};

inline void state_to_config(std::uint32_t s, Configuration& sigma) {
  for (std::size_t i = 0; i < sigma.occ.size(); ++i)
    sigma.occ[i] = static_cast<std::uint8_t>(s >> i & 1u);
}

// Unnormalized product weight p^{#filled} q^{#empty}.
inline double product_weight(std::uint32_t s, int n, double q) {
  double p = 1.0 - q, w = 1.0;
  for (int i = 0; i < n; ++i) w *= (s >> i & 1u) ? p : q;
  return w;
}

struct RateMatrix {
  std::shared_ptr<const VolumeContext> ctx;  // interprets state bits
  ModelSpec spec;
  StateIndex idx;
  std::string kind;  // "full", "hat", "tilde", "minimal-boundary"

  std::vector<std::vector<std::pair<int, double>>> rows;  // off-diagonal
  std::vector<double> exit_rate;                          // -diagonal
  std::vector<double> pi;
  double db_residual = 0.0;
  std::string note;  // degeneracy flags raised at construction

  int dim() const { return idx.dim(); }

  // max |pi_a q(a,b) - pi_b q(b,a)| over listed transitions
  double detailed_balance_residual() const { return db_residual; }
};

namespace detail {

// Core builder: rate(sigma_bits, site) gives the off-diagonal rate of the
// flip at `site`; moves are kept only between states of `idx`.
inline RateMatrix build_chain(std::shared_ptr<const VolumeContext> interp_ctx,
                              const ModelSpec& spec, StateIndex idx,
                              const std::function<double(std::uint32_t, int)>& rate,
                              std::string kind) {
  spec.validate();
  const int n = idx.n_sites;
  RateMatrix Q;
  Q.ctx = std::move(interp_ctx);
  Q.spec = spec;
  Q.idx = std::move(idx);
  Q.kind = std::move(kind);
  const int dim = Q.dim();
  Q.rows.resize(dim);
  Q.exit_rate.assign(dim, 0.0);
  Q.pi.assign(dim, 0.0);

  double total_w = 0.0;
  for (int a = 0; a < dim; ++a) {
    std::uint32_t s = Q.idx.states[a];
    Q.pi[a] = product_weight(s, n, spec.q);
    total_w += Q.pi[a];
    for (int i = 0; i < n; ++i) {
      std::uint32_t t = s ^ (1u << i);
      int b = Q.idx.pos[t];
      if (b < 0) continue;
      double r = rate(s, i);
      if (r > 0.0) {
        Q.rows[a].emplace_back(b, r);
        Q.exit_rate[a] += r;
      }
    }
  }
  for (double& w : Q.pi) w /= total_w;

  double res = 0.0;
  for (int a = 0; a < dim; ++a)
    for (auto [b, r] : Q.rows[a]) {
      double back = 0.0;
      for (auto [c, r2] : Q.rows[b])
        if (c == a) back = r2;
      res = std::max(res, std::abs(Q.pi[a] * r - Q.pi[b] * back));
    }
  Q.db_residual = res;
  return Q;
}

inline std::function<double(std::uint32_t, int)> context_rate_fn(
    std::shared_ptr<const VolumeContext> ctx, ModelSpec spec) {
  // One scratch configuration per returned closure; chain builders are
  // single-threaded per instance.
  auto scratch = std::make_shared<Configuration>(*ctx);
  return [ctx, spec, scratch](std::uint32_t s, int site) {
    state_to_config(s, *scratch);
    return flip_rate(spec, *scratch, site);
  };
}

inline std::vector<std::uint32_t> blockmasks_of(const VolumeContext& ctx,
                                                const Partition& p) {
  std::vector<std::uint32_t> masks(p.block_count(), 0);
  int covered = 0;
  for (int b = 0; b < p.block_count(); ++b)
    for (int v : p.blocks[b]) {
      int i = ctx.site_index(v);
      if (i < 0) throw std::invalid_argument("partition block leaves the volume");
      masks[b] |= 1u << i;
      ++covered;
    }
  if (covered != ctx.size())
    throw std::invalid_argument("partition must cover the volume exactly");
  return masks;
}

}  // namespace detail

// Full finite-volume generator; pi is the Bernoulli(p) product over all
// 2^|volume| states.
inline RateMatrix build_generator(const Graph& g, const std::vector<int>& volume,
                                  const BoundaryCondition& bc,
                                  const ModelSpec& spec) {
  if (static_cast<int>(volume.size()) > kIterativeSiteCap)
    throw std::invalid_argument("volume too large for exact mode");
  auto ctx = std::make_shared<const VolumeContext>(g, volume, bc);
  auto idx = StateIndex::full(ctx->size());
  return detail::build_chain(ctx, spec, std::move(idx),
                             detail::context_rate_fn(ctx, spec), "full");
}

// States with at least `min_vac` vacancies inside every block.
inline std::vector<std::uint32_t> component_states(const VolumeContext& ctx,
                                                   const Partition& p,
                                                   int min_vac) {
  auto masks = detail::blockmasks_of(ctx, p);
  std::vector<std::uint32_t> out;
  const std::uint32_t total = 1u << ctx.size();
  for (std::uint32_t s = 0; s < total; ++s) {
    bool ok = true;
    for (std::uint32_t bm : masks)
      if (std::popcount(bm & ~s) < min_vac) {
        ok = false;
        break;
      }
    if (ok) out.push_back(s);
  }
  return out;
}

// Hat chain: filled-exterior constraints on the whole volume, restricted to
// the component with >= 1 vacancy per block. Its stationary measure is the
// conditioned product measure.
inline RateMatrix build_hat_chain(const RateMatrix& Q, const Partition& p) {
  auto hat_ctx = std::make_shared<const VolumeContext>(
      Q.ctx->graph(), Q.ctx->volume(), BoundaryCondition::filled());
  auto states = component_states(*hat_ctx, p, 1);
  if (states.empty()) throw std::invalid_argument("hat component is empty");
  auto idx = StateIndex::restricted(hat_ctx->size(), std::move(states));
  return detail::build_chain(hat_ctx, Q.spec, std::move(idx),
                             detail::context_rate_fn(hat_ctx, Q.spec), "hat");
}

// Single-block hat chain on a bare volume (the whole volume is one block).
inline RateMatrix build_hat_single(const Graph& g, const std::vector<int>& volume,
                                   const ModelSpec& spec) {
  Partition whole;
  whole.blocks = {volume};
  whole.centers = {volume.front()};
  whole.radius = 1;
  auto Q = build_generator(g, volume, BoundaryCondition::filled(), spec);
  return build_hat_chain(Q, whole);
}

// Tilde chain: same mask as the hat chain but block-local constraints (each
// block sees everything outside itself as filled). Tensorizes over blocks.
inline RateMatrix build_tilde_chain(const RateMatrix& Q, const Partition& p) {
  const VolumeContext& base = *Q.ctx;
  auto tilde_ctx = std::make_shared<const VolumeContext>(
      base.graph(), base.volume(), BoundaryCondition::filled());
  auto states = component_states(*tilde_ctx, p, 1);
  auto idx = StateIndex::restricted(tilde_ctx->size(), std::move(states));

  struct BlockSlot {
    int block = -1;
    int local_site = -1;
  };
  auto block_ctxs = std::make_shared<std::vector<VolumeContext>>();
  auto slots = std::make_shared<std::vector<BlockSlot>>(tilde_ctx->size());
  for (int b = 0; b < p.block_count(); ++b) {
    block_ctxs->emplace_back(base.graph(), p.blocks[b],
                             BoundaryCondition::filled());
    const VolumeContext& bc = block_ctxs->back();
    for (int j = 0; j < bc.size(); ++j) {
      int full_site = tilde_ctx->site_index(bc.vertex_of(j));
      (*slots)[full_site] = {b, j};
    }
  }

  ModelSpec spec = Q.spec;
  // a block whose own hat chain has no moves (e.g. a single site walled in
  // by filled surroundings) freezes its factor
  std::string note;
  for (int b = 0; b < p.block_count(); ++b) {
    const VolumeContext& bc = (*block_ctxs)[b];
    Configuration sigma(bc);
    bool any_move = false;
    const std::uint32_t nb = 1u << bc.size();
    for (std::uint32_t s = 0; s + 1 < nb && !any_move; ++s) {  // skip all-filled
      state_to_config(s, sigma);
      for (int j = 0; j < bc.size() && !any_move; ++j) {
        std::uint32_t t = s ^ (1u << j);
        if (t + 1 == nb) continue;
        any_move = flip_rate(spec, sigma, j) > 0.0;
      }
    }
    if (!any_move)
      note += (note.empty() ? "" : "; ") + std::string("frozen block ") +
              std::to_string(b);
  }

  auto scratch = std::make_shared<std::vector<Configuration>>();
  for (auto& c : *block_ctxs) scratch->emplace_back(c);
  auto rate = [tilde_ctx, block_ctxs, slots, scratch,
               spec](std::uint32_t s, int site) {
    auto [b, local] = (*slots)[site];
    Configuration& sigma = (*scratch)[b];
    const VolumeContext& bc = (*block_ctxs)[b];
    for (int j = 0; j < bc.size(); ++j) {
      int full_site = tilde_ctx->site_index(bc.vertex_of(j));
      sigma.occ[j] = static_cast<std::uint8_t>(s >> full_site & 1u);
    }
    return flip_rate(spec, sigma, local);
  };
  auto chain = detail::build_chain(tilde_ctx, spec, std::move(idx), rate, "tilde");
  chain.note = note;
  return chain;
}

// FA1f on A with the exterior entirely filled except one empty boundary
// vertex z. Ergodic on the full state space of A.
inline RateMatrix build_minimal_boundary_chain(const Graph& g,
                                               const std::vector<int>& A, int z,
                                               const ModelSpec& spec) {
  auto bc = BoundaryCondition::filled_except_at(z);
  auto ctx = std::make_shared<const VolumeContext>(g, A, bc);
  auto idx = StateIndex::full(ctx->size());
  auto Q = detail::build_chain(ctx, spec, std::move(idx),
                               detail::context_rate_fn(ctx, spec),
                               "minimal-boundary");
  // ergodicity: every state reachable through positive-rate moves
  std::vector<char> seen(Q.dim(), 0);
  std::queue<int> bfs;
  bfs.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!bfs.empty()) {
    int a = bfs.front();
    bfs.pop();
    for (auto [b, r] : Q.rows[a])
      if (!seen[b]) {
        seen[b] = 1;
        ++reached;
        bfs.push(b);
      }
  }
  if (reached != Q.dim())
    throw std::logic_error("minimal-boundary chain is not ergodic");
  return Q;
}

// ---------------------------------------------------------------------------
// Spectra.

struct SpectralReport {
  double gap = 0.0;
  std::vector<double> eigenvalues;  // of -Q, ascending; dense mode only
  double pi_min = 0.0;
  double log_sobolev_upper = 0.0;  // gap^-1 * log(1/pi_min)
  std::string method;              // "dense" or "iterative"
};

namespace detail {

// Apply the symmetrized negative generator: y = (-S) x with
// S = D^{1/2} Q D^{-1/2}, S_ab = sqrt(q_ab q_ba) off-diagonal.
class SymNegGenerator {
 public:
  explicit SymNegGenerator(const RateMatrix& Q) : Q_(&Q) {
    sym_.resize(Q.dim());
    for (int a = 0; a < Q.dim(); ++a)
      for (auto [b, r] : Q.rows[a]) {
        if (b < a) continue;  // store each undirected pair once
        double back = 0.0;
        for (auto [c, r2] : Q.rows[b])
          if (c == a) back = r2;
        double s = std::sqrt(r * back);
        if (s > 0.0) sym_[a].emplace_back(b, s);
      }
  }

  int dim() const { return Q_->dim(); }

  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    const auto& exit = Q_->exit_rate;
    for (int a = 0; a < dim(); ++a) y[a] = exit[a] * x[a];
    for (int a = 0; a < dim(); ++a)
      for (auto [b, s] : sym_[a]) {
        y[a] -= s * x[b];
        y[b] -= s * x[a];
      }
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim(), dim());
    for (int a = 0; a < dim(); ++a) {
      M(a, a) = Q_->exit_rate[a];
      for (auto [b, s] : sym_[a]) {
        M(a, b) = -s;
        M(b, a) = -s;
      }
    }
    return M;
  }

 private:
  const RateMatrix* Q_;
  std::vector<std::vector<std::pair<int, double>>> sym_;
};

// Restarted Krylov subspace iteration with explicit Rayleigh-Ritz for the
// lowest eigenvalue of -S on the orthogonal complement of the known kernel
// vector sqrt(pi). Expansion vectors are Lanczos-style (apply the operator
// to the newest basis vector, orthogonalize fully), which keeps Krylov
// convergence while staying numerically simple. Relative tolerance 1e-8.
inline double lanczos_gap(const RateMatrix& Q) {
  const int n = Q.dim();
  SymNegGenerator op(Q);
  Eigen::VectorXd kernel(n);
  for (int a = 0; a < n; ++a) kernel[a] = std::sqrt(Q.pi[a]);
  kernel.normalize();

  double norm_bound = 0.0;
  for (int a = 0; a < n; ++a) norm_bound = std::max(norm_bound, 2.0 * Q.exit_rate[a]);
  if (norm_bound == 0.0) return 0.0;

  const int m_max = std::min(n - 1, n > 5000 ? 40 : 60);
  const int k_keep = std::min(8, std::max(1, m_max / 4));
  const int max_restarts = 400;
  const double tol = 1e-8;

  Rng rng(0x5eedbeefULL);
  auto random_vec = [&] {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform01() - 0.5;
    return v;
  };
  auto orthogonalize = [&](Eigen::VectorXd& w, const Eigen::MatrixXd& V, int m) {
    for (int pass = 0; pass < 2; ++pass) {
      w -= kernel.dot(w) * kernel;
      for (int i = 0; i < m; ++i) w -= V.col(i).dot(w) * V.col(i);
    }
  };

  Eigen::MatrixXd V(n, m_max), W(n, m_max);
  Eigen::VectorXd w = random_vec();
  orthogonalize(w, V, 0);
  V.col(0) = w.normalized();
  int m = 0;
  double best = 0.0;

  for (int restart = 0; restart < max_restarts; ++restart) {
    // expand the basis; W holds A * V column by column
    while (m < m_max) {
      op.apply(V.col(m), w);
      W.col(m) = w;
      ++m;
      if (m == m_max) break;
      orthogonalize(w, V, m);
      double nb = w.norm();
      if (nb < 1e-12) {
        w = random_vec();
        orthogonalize(w, V, m);
        nb = w.norm();
        if (nb < 1e-12) break;
      }
      V.col(m) = w / nb;
    }

    Eigen::MatrixXd H = V.leftCols(m).transpose() * W.leftCols(m);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    best = es.eigenvalues()(0);

    Eigen::VectorXd y = V.leftCols(m) * es.eigenvectors().col(0);
    Eigen::VectorXd r = W.leftCols(m) * es.eigenvectors().col(0) - best * y;
    r -= kernel.dot(r) * kernel;
    if (r.norm() <= tol * norm_bound) return best;

    // restart from the lowest Ritz vectors plus the residual direction;
    // loop invariant: V has columns 0..m set, W has columns 0..m-1
    int k = std::min(k_keep, m);
    Eigen::MatrixXd ritz = V.leftCols(m) * es.eigenvectors().leftCols(k);
    V.leftCols(k) = ritz;
    for (int i = 0; i < k; ++i) {
      op.apply(V.col(i), w);
      W.col(i) = w;
    }
    m = k;
    w = r;
    orthogonalize(w, V, m);
    double nb = w.norm();
    if (nb < 1e-12) {
      w = random_vec();
      orthogonalize(w, V, m);
      nb = w.norm();
    }
    V.col(m) = w / nb;
  }
  return best;
}

}  // namespace detail

inline SpectralReport spectral_gap(const RateMatrix& Q,
                                   bool force_iterative = false) {
  if (Q.db_residual >= 1e-9)
    throw std::invalid_argument("chain is not reversible (residual too large)");
  for (double w : Q.pi)
    if (!(w > 0.0))
      throw std::invalid_argument(
          "stationary measure must be strictly positive on the chain");

  SpectralReport rep;
  rep.pi_min = *std::min_element(Q.pi.begin(), Q.pi.end());

  const bool dense = !force_iterative &&
                     Q.idx.n_sites <= kDenseSiteCap &&
                     Q.dim() <= (1 << kDenseSiteCap);
  if (dense) {
    detail::SymNegGenerator op(Q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.dense(),
                                                      Eigen::EigenvaluesOnly);
    rep.eigenvalues.assign(es.eigenvalues().data(),
                           es.eigenvalues().data() + Q.dim());
    const double zero_tol = 1e-8 * std::max(1.0, rep.eigenvalues.back());
    if (std::abs(rep.eigenvalues.front()) > zero_tol)
      throw std::logic_error("generator has no zero eigenvalue");
    if (Q.dim() > 1 && rep.eigenvalues[1] <= zero_tol)
      throw std::invalid_argument(
          "reducible chain: zero eigenvalue multiplicity > 1 "
          "(restriction mask required)");
    rep.gap = Q.dim() > 1 ? rep.eigenvalues[1] : 0.0;
    rep.method = "dense";
  } else {
    if (Q.idx.n_sites > kIterativeSiteCap)
      throw std::invalid_argument("volume too large for iterative mode");
    rep.gap = detail::lanczos_gap(Q);
    rep.method = "iterative";
  }
  rep.log_sobolev_upper = rep.gap > 0 ? std::log(1.0 / rep.pi_min) / rep.gap
                                      : std::numeric_limits<double>::infinity();
  return rep;
}

// The proven upper bound for the log-Sobolev constant of a reversible chain.
inline double log_sobolev_upper(const SpectralReport& rep) {
  if (!(rep.gap > 0) || !(rep.pi_min > 0))
    throw std::invalid_argument("log-Sobolev bound needs gap > 0 and pi_min > 0");
  return std::log(1.0 / rep.pi_min) / rep.gap;
}

// ---------------------------------------------------------------------------
// Uniformization: exact transients of e^{tQ}, truncated when the Poisson
// tail mass drops below 1e-14.

namespace detail {

// returns nu P^k weighted sums: series[time] = sum_k pois_k(rate*t) (nu P^k) f
inline double uniformized_value(const RateMatrix& Q,
                                const std::vector<char>* allowed,
                                std::vector<double> nu,
                                const std::vector<double>& f, double t) {
  const int dim = Q.dim();
  double lam = 0.0;
  for (int a = 0; a < dim; ++a)
    if (!allowed || (*allowed)[a]) lam = std::max(lam, Q.exit_rate[a]);
  if (allowed)
    for (int a = 0; a < dim; ++a)
      if (!(*allowed)[a]) nu[a] = 0.0;

  auto dot_f = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += v[a] * f[a];
    return s;
  };

  const double m = lam * t;
  if (m == 0.0) return dot_f(nu);
  if (m > 600.0)
    throw std::invalid_argument("uniformization horizon too large (rate * t > 600)");

  // Poisson weights by stable recurrence; m stays desk-scale (< ~1000)
  double log_w0 = -m;
  double w = std::exp(log_w0);
  double acc = w * dot_f(nu);
  double cum = w;
  std::vector<double> cur = std::move(nu), next(dim);
  for (int k = 1; cum < 1.0 - 1e-14; ++k) {
    // next = cur P, P = I + Q/lam restricted to allowed states
    for (int a = 0; a < dim; ++a)
      next[a] = cur[a] * (1.0 - Q.exit_rate[a] / lam);
    for (int a = 0; a < dim; ++a) {
      if (cur[a] == 0.0) continue;
      if (allowed && !(*allowed)[a]) continue;
      for (auto [b, r] : Q.rows[a]) {
        if (allowed && !(*allowed)[b]) continue;
        next[b] += cur[a] * r / lam;
      }
    }
    if (allowed)
      for (int a = 0; a < dim; ++a)
        if (!(*allowed)[a]) next[a] = 0.0;
    std::swap(cur, next);
    w *= m / k;
    cum += w;
    acc += w * dot_f(cur);
    if (k > 10 * m + 100) break;  // safety; unreachable at tail mass 1e-14
  }
  return acc;
}

}  // namespace detail

// E_nu(f(X_t)) exactly, for each time.
inline std::vector<double> transient_expectation(const RateMatrix& Q,
                                                 const std::vector<double>& nu,
                                                 const std::vector<double>& f,
                                                 const std::vector<double>& times) {
  if (Q.idx.n_sites > kDenseSiteCap)
    throw std::invalid_argument("dimension too large for exact transients");
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times)
    out.push_back(detail::uniformized_value(Q, nullptr, nu, f, t));
  return out;
}

inline std::vector<double> dirac_distribution(const RateMatrix& Q,
                                              std::uint32_t state_bits) {
  std::vector<double> nu(Q.dim(), 0.0);
  int a = Q.idx.pos[state_bits];
  if (a < 0) throw std::invalid_argument("state not in the chain");
  nu[a] = 1.0;
  return nu;
}

// P_nu(X_s in allowed for all s <= t): survival of the killed semigroup.
// Initial mass outside `allowed` counts as already exited.
inline std::vector<double> taboo_survival(const RateMatrix& Q,
                                          const std::vector<char>& allowed,
                                          const std::vector<double>& nu,
                                          const std::vector<double>& times) {
  std::vector<double> ones(Q.dim(), 1.0);
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times)
    out.push_back(detail::uniformized_value(Q, &allowed, nu, ones, t));
  return out;
}

// ---------------------------------------------------------------------------
// Quadratic forms.

// D(f) = (1/2) sum_{a,b} pi_a q(a,b) (f_b - f_a)^2.
inline double dirichlet_form(const RateMatrix& Q, const std::vector<double>& f) {
  double acc = 0.0;
  for (int a = 0; a < Q.dim(); ++a)
    for (auto [b, r] : Q.rows[a]) {
      double d = f[b] - f[a];
      acc += 0.5 * Q.pi[a] * r * d * d;
    }
  return acc;
}

// <f, -Qf>_pi evaluated directly; equals the Dirichlet form for reversible Q.
inline double quadratic_form(const RateMatrix& Q, const std::vector<double>& f) {
  double acc = 0.0;
  for (int a = 0; a < Q.dim(); ++a) {
    double qf = -Q.exit_rate[a] * f[a];
    for (auto [b, r] : Q.rows[a]) qf += r * f[b];
    acc += Q.pi[a] * f[a] * (-qf);
  }
  return acc;
}

// Var_x(f)(state) = p q (f(state with x filled) - f(state with x empty))^2,
// for functions on the full state space.
inline double local_variance(double q, const std::vector<double>& f_full,
                             int site, std::uint32_t state_bits) {
  std::uint32_t s1 = state_bits | (1u << site);
  std::uint32_t s0 = state_bits & ~(1u << site);
  double d = f_full[s1] - f_full[s0];
  return (1.0 - q) * q * d * d;
}

// Ent_pi(f) = pi(f log f) - pi(f) log pi(f), f >= 0 not identically 0.
inline double entropy(const std::vector<double>& pi,
                      const std::vector<double>& f) {
  double mean = 0.0, flogf = 0.0;
  bool any_positive = false;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    if (f[a] < 0.0) throw std::invalid_argument("entropy needs f >= 0");
    if (f[a] > 0.0) {
      flogf += pi[a] * f[a] * std::log(f[a]);
      any_positive = true;
    }
    mean += pi[a] * f[a];
  }
  if (!any_positive) throw std::invalid_argument("entropy needs f not identically 0");
  return flogf - mean * std::log(mean);
}

// Evaluate an observable on every chain state.
inline std::vector<double> observable_on_states(const RateMatrix& Q,
                                                const Observable& f) {
  Configuration sigma(*Q.ctx);
  std::vector<double> out(Q.dim());
  for (int a = 0; a < Q.dim(); ++a) {
    state_to_config(Q.idx.states[a], sigma);
    out[a] = f.eval(sigma);
  }
  return out;
}

}  // namespace kcmlab
