#pragma once

// Spin configurations on a finite volume with boundary conditions, the
// facilitation constraints, flip rates, the distance-to-nearest-vacancy
// observable xi, block vacancy events, local observables and initial laws.
//
// Occupation convention (easy to get backwards, so stated loudly):
//   1 = filled, 0 = empty. The equilibrium measure fills each site
// independently with probability p = 1 - q; q is the vacancy density.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "kcmlab/graph.hpp"
#include "kcmlab/partition.hpp"
#include "kcmlab/rng.hpp"

namespace kcmlab {

// xi = +infinity when no vacancy is visible (kept as a distinguished value;
// theta^xi must never be formed from it).
inline constexpr int kXiInfinite = std::numeric_limits<int>::max();

enum class ConstraintKind {
  FA1f,          // at least one nearest neighbor empty
  TwoWithinTwo,  // at least two empties at distance 1 or 2 (excluding the site)
};

struct ModelSpec {
  double q = 0.5;  // vacancy probability; p is always derived, never stored
  ConstraintKind constraint = ConstraintKind::FA1f;

  double p() const { return 1.0 - q; }
  void validate() const {
    if (!(q >= 0.0 && q <= 1.0))
      throw std::invalid_argument("q must lie in [0,1]");
  }
};

struct BoundaryCondition {
  enum class Kind { Empty, Filled, FilledExceptAt, Explicit };
  Kind kind = Kind::Empty;
  int except_vertex = -1;          // FilledExceptAt
  std::map<int, int> values;       // Explicit: boundary vertex -> 0/1

  static BoundaryCondition empty() { return {}; }
  static BoundaryCondition filled() { return {Kind::Filled, -1, {}}; }
  static BoundaryCondition filled_except_at(int z) {
    return {Kind::FilledExceptAt, z, {}};
  }
  static BoundaryCondition explicit_values(std::map<int, int> v) {
    return {Kind::Explicit, -1, std::move(v)};
  }

  int value_at(int boundary_vertex) const {
    switch (kind) {
      case Kind::Empty:
        return 0;
      case Kind::Filled:
        return 1;
      case Kind::FilledExceptAt:
        return boundary_vertex == except_vertex ? 0 : 1;
      case Kind::Explicit: {
        auto it = values.find(boundary_vertex);
        if (it == values.end())
          throw std::invalid_argument("explicit boundary misses a vertex");
        return it->second;
      }
    }
    return 0;
  }
};

// Precomputed geometry for one (graph, volume, boundary) triple. Neighbor
// codes: >= 0 is an in-volume site index, -1 a boundary vertex held empty,
// -2 a boundary vertex held filled. Immutable once built.
class VolumeContext {
 public:
  VolumeContext(const Graph& g, std::vector<int> volume, BoundaryCondition bc)
      : graph_(&g), volume_(std::move(volume)), bc_(bc) {
    std::sort(volume_.begin(), volume_.end());
    if (volume_.empty()) throw std::invalid_argument("empty volume");
    index_of_.assign(g.vertex_count(), -1);
    for (int i = 0; i < size(); ++i) {
      int v = volume_[i];
      if (v < 0 || v >= g.vertex_count())
        throw std::invalid_argument("volume vertex out of range");
      if (index_of_[v] >= 0) throw std::invalid_argument("duplicate volume vertex");
      index_of_[v] = i;
    }
    for (int v = 0; v < g.vertex_count(); ++v) {
      if (index_of_[v] >= 0) continue;
      for (int w : g.neighbors(v))
        if (index_of_[w] >= 0) {
          boundary_.push_back(v);
          break;
        }
    }
    if (bc_.kind == BoundaryCondition::Kind::FilledExceptAt) {
      bool on_boundary = false;
      for (int b : boundary_) on_boundary |= (b == bc_.except_vertex);
      if (!on_boundary)
        throw std::invalid_argument(
            "FilledExceptAt vertex must lie on the outer boundary");
    }

    nbr_codes_.resize(size());
    nbr2_codes_.resize(size());
    for (int i = 0; i < size(); ++i) {
      int x = volume_[i];
      for (int y : g.neighbors(x)) nbr_codes_[i].push_back(code_for(y));
      // punctured radius-2 neighborhood for the distance-2 constraint
      std::vector<int> shell;
      for (int y : g.neighbors(x)) {
        shell.push_back(y);
        for (int z : g.neighbors(y)) shell.push_back(z);
      }
      std::sort(shell.begin(), shell.end());
      shell.erase(std::unique(shell.begin(), shell.end()), shell.end());
      for (int y : shell)
        if (y != x && (index_of_[y] >= 0 || is_boundary(y)))
          nbr2_codes_[i].push_back(code_for(y));
    }
  }

  const Graph& graph() const { return *graph_; }
  int size() const { return static_cast<int>(volume_.size()); }
  const std::vector<int>& volume() const { return volume_; }
  const std::vector<int>& boundary() const { return boundary_; }
  const BoundaryCondition& boundary_condition() const { return bc_; }
  int site_index(int graph_vertex) const { return index_of_[graph_vertex]; }
  int vertex_of(int site_index) const { return volume_[site_index]; }
  const std::vector<int>& neighbor_codes(int site) const { return nbr_codes_[site]; }
  const std::vector<int>& neighbor2_codes(int site) const { return nbr2_codes_[site]; }
  bool is_boundary(int v) const {
    return index_of_[v] < 0 &&
           std::binary_search(boundary_.begin(), boundary_.end(), v);
  }
  int boundary_value(int v) const { return bc_.value_at(v); }

 private:
  int code_for(int graph_vertex) const {
    int idx = index_of_[graph_vertex];
    if (idx >= 0) return idx;
    return bc_.value_at(graph_vertex) == 0 ? -1 : -2;
  }

  const Graph* graph_;
  std::vector<int> volume_;
  BoundaryCondition bc_;
  std::vector<int> index_of_;
  std::vector<int> boundary_;  // sorted by construction order = ascending
  std::vector<std::vector<int>> nbr_codes_;
  std::vector<std::vector<int>> nbr2_codes_;
};

struct Configuration {
  const VolumeContext* ctx = nullptr;
  std::vector<std::uint8_t> occ;  // 1 = filled, 0 = empty; indexed by site

  Configuration() = default;
  explicit Configuration(const VolumeContext& c, std::uint8_t fill = 1)
      : ctx(&c), occ(c.size(), fill) {}

  std::uint8_t at_vertex(int graph_vertex) const {
    return occ[ctx->site_index(graph_vertex)];
  }
  void set_vertex(int graph_vertex, std::uint8_t v) {
    occ[ctx->site_index(graph_vertex)] = v;
  }
};

// Occupation value seen through a neighbor code.
inline int value_of_code(const Configuration& sigma, int code) {
  if (code >= 0) return sigma.occ[code];
  return code == -1 ? 0 : 1;
}

// c_x(sigma): whether a refresh at site is currently allowed. Never depends
// on the site's own state.
inline int constraint(const ModelSpec& spec, const Configuration& sigma,
                      int site) {
  if (spec.constraint == ConstraintKind::FA1f) {
    for (int code : sigma.ctx->neighbor_codes(site))
      if (value_of_code(sigma, code) == 0) return 1;
    return 0;
  }
  int empties = 0;
  for (int code : sigma.ctx->neighbor2_codes(site))
    if (value_of_code(sigma, code) == 0 && ++empties >= 2) return 1;
  return 0;
}

// Rate of the flip sigma -> sigma^x: c_x * (q if filled, p if empty).
inline double flip_rate(const ModelSpec& spec, const Configuration& sigma,
                        int site) {
  if (!constraint(spec, sigma, site)) return 0.0;
  return sigma.occ[site] ? spec.q : spec.p();
}

// xi^x: graph distance from x to the nearest empty site, searching the
// volume and its boundary vertices (with their boundary values). Returns
// kXiInfinite when everything visible is filled.
inline int xi(const Configuration& sigma, int x_vertex) {
  const VolumeContext& ctx = *sigma.ctx;
  const Graph& g = ctx.graph();
  std::vector<int> dist(g.vertex_count(), -1);
  std::queue<int> q;
  dist[x_vertex] = 0;
  q.push(x_vertex);
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    int idx = ctx.site_index(v);
    if (idx >= 0) {
      if (sigma.occ[idx] == 0) return dist[v];
    } else if (ctx.is_boundary(v)) {
      if (ctx.boundary_value(v) == 0) return dist[v];
    }
    for (int w : g.neighbors(v))
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
  }
  return kXiInfinite;
}

struct EFSets {
  std::vector<int> E;  // empty sites at distance xi (graph vertices)
  std::vector<int> F;  // in-volume sites at distance xi-1 adjacent to E
};

// The shell sets behind the xi drift computation. Requires 1 <= xi < inf;
// every F flip is checked legal before returning.
inline EFSets ef_sets(const ModelSpec& spec, const Configuration& sigma,
                      int x_vertex) {
  int d_xi = xi(sigma, x_vertex);
  if (d_xi == 0 || d_xi == kXiInfinite)
    throw std::invalid_argument("ef_sets needs 1 <= xi < infinity");
  const VolumeContext& ctx = *sigma.ctx;
  const Graph& g = ctx.graph();
  auto dist = g.distances_from(x_vertex);

  EFSets out;
  std::vector<char> in_E(g.vertex_count(), 0);
  for (int v = 0; v < g.vertex_count(); ++v) {
    if (dist[v] != d_xi) continue;
    int idx = ctx.site_index(v);
    int val = idx >= 0 ? sigma.occ[idx]
                       : (ctx.is_boundary(v) ? ctx.boundary_value(v) : 1);
    if (val == 0) {
      out.E.push_back(v);
      in_E[v] = 1;
    }
  }
  for (int v = 0; v < g.vertex_count(); ++v) {
    if (dist[v] != d_xi - 1 || ctx.site_index(v) < 0) continue;
    for (int w : g.neighbors(v))
      if (in_E[w]) {
        out.F.push_back(v);
        break;
      }
  }
  for (int v : out.F)
    if (!constraint(spec, sigma, ctx.site_index(v)))
      throw std::logic_error("F-site flip unexpectedly illegal");
  return out;
}

inline int block_vacancies(const Configuration& sigma,
                           const std::vector<int>& block) {
  int k = 0;
  for (int v : block) k += (sigma.at_vertex(v) == 0);
  return k;
}

// A: at least two vacancies in every block. hatA: at least one.
inline bool in_A(const Configuration& sigma, const Partition& p) {
  for (const auto& b : p.blocks)
    if (block_vacancies(sigma, b) < 2) return false;
  return true;
}
inline bool in_hatA(const Configuration& sigma, const Partition& p) {
  for (const auto& b : p.blocks)
    if (block_vacancies(sigma, b) < 1) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Local observables: a truth table over at most 20 support sites.
// Table index: bit i = occupation of support[i].

struct Observable {
  std::vector<int> support;   // graph vertices
  std::vector<double> table;  // 2^|support| values

  void validate() const {
    if (support.size() > 20)
      throw std::invalid_argument("observable support larger than 20 sites");
    if (table.size() != (std::size_t{1} << support.size()))
      throw std::invalid_argument("observable table size must be 2^|support|");
  }

  double eval(const Configuration& sigma) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < support.size(); ++i)
      idx |= static_cast<std::size_t>(sigma.at_vertex(support[i])) << i;
    return table[idx];
  }

  // Exact Bernoulli(p)-product average over the support.
  double mu_mean(double q) const {
    double p = 1.0 - q, acc = 0.0;
    for (std::size_t s = 0; s < table.size(); ++s) {
      double w = 1.0;
      for (std::size_t i = 0; i < support.size(); ++i)
        w *= (s >> i & 1) ? p : q;
      acc += w * table[s];
    }
    return acc;
  }

  double norm_inf() const {
    double m = 0;
    for (double v : table) m = std::max(m, std::abs(v));
    return m;
  }

  // f(sigma) = 1 - sigma(x) - q, the centered vacancy indicator.
  static Observable vacancy_at(int x, double q) {
    Observable f;
    f.support = {x};
    f.table = {1.0 - q, -q};
    return f;
  }
};

// ---------------------------------------------------------------------------
// Initial laws.

struct InitialLaw {
  enum class Kind { BernoulliProduct, Dirac, PeriodicVacancies };
  Kind kind = Kind::BernoulliProduct;
  double fill_prob = 0.5;            // BernoulliProduct: P(site filled)
  std::vector<std::uint8_t> eta;     // Dirac
  int spacing = 1;                   // PeriodicVacancies

  static InitialLaw bernoulli(double fill) {
    InitialLaw l;
    l.kind = Kind::BernoulliProduct;
    l.fill_prob = fill;
    return l;
  }
  static InitialLaw dirac(std::vector<std::uint8_t> cfg) {
    InitialLaw l;
    l.kind = Kind::Dirac;
    l.eta = std::move(cfg);
    return l;
  }
  static InitialLaw periodic_vacancies(int spacing) {
    if (spacing < 1) throw std::invalid_argument("vacancy spacing must be >= 1");
    InitialLaw l;
    l.kind = Kind::PeriodicVacancies;
    l.spacing = spacing;
    return l;
  }
};

inline Configuration sample_initial(const InitialLaw& law,
                                    const VolumeContext& ctx, Rng& rng) {
  Configuration sigma(ctx);
  switch (law.kind) {
    case InitialLaw::Kind::BernoulliProduct:
      for (auto& o : sigma.occ) o = rng.bernoulli(law.fill_prob) ? 1 : 0;
      break;
    case InitialLaw::Kind::Dirac:
      if (law.eta.size() != sigma.occ.size())
        throw std::invalid_argument("Dirac configuration size mismatch");
      sigma.occ = law.eta;
      break;
    case InitialLaw::Kind::PeriodicVacancies:
      for (int i = 0; i < ctx.size(); ++i)
        sigma.occ[i] = (i % law.spacing == 0) ? 0 : 1;
      break;
  }
  return sigma;
}

// kappa(theta) = sup_x E_nu(theta^{xi^x}); closed form for Bernoulli laws,
// exact evaluation for the deterministic ones.
inline double kappa_bound(const InitialLaw& law, double theta,
                          const VolumeContext& ctx) {
  if (!(theta > 1.0)) throw std::invalid_argument("kappa bound needs theta > 1");
  if (law.kind == InitialLaw::Kind::BernoulliProduct) {
    double pt = law.fill_prob * theta;
    if (pt >= 1.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (1.0 - pt);
  }
  Rng unused(0);
  Configuration eta = sample_initial(law, ctx, unused);
  int worst = 0;
  for (int i = 0; i < ctx.size(); ++i) {
    int d = xi(eta, ctx.vertex_of(i));
    if (d == kXiInfinite) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return std::pow(theta, worst);
}

}  // namespace kcmlab
