#pragma once

// Partition of a volume into connected blocks built around disjoint balls:
// greedy maximal packing of radius-ell balls (candidates scanned in vertex
// order), then leftover vertices attached by a synchronous multi-source BFS
// that grows all balls at once. Ties go to the lowest-indexed center ball,
// which makes the construction deterministic given the vertex order.
//
// Target invariants, verified by check_partition:
//   blocks disjoint, cover the volume, each connected,
//   B(x_i, ell) subset Lambda_i subset B(x_i, 3 ell).
//
// Block halving splits every block into two connected pieces grown from a
// diametral vertex pair, and certifies a center with B(center, floor(ell/4))
// inside its half whenever one exists.

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "kcmlab/graph.hpp"

namespace kcmlab {

struct BlockHalves {
  std::vector<int> plus, minus;
  int center_plus = -1, center_minus = -1;
  int certified_radius = 0;  // floor(ell/4) when certified, else 0
  bool degenerate = false;   // block too small to split
};

struct Partition {
  std::vector<std::vector<int>> blocks;  // sorted vertex lists
  std::vector<int> centers;
  int radius = 0;  // ell
  bool degenerate_single_block = false;
  bool certified = true;  // all containment invariants held at construction
  // max distance of a leftover vertex to the union of center balls,
  // measured before attachment (-1 when there were no leftovers)
  int max_leftover_distance = -1;

  bool has_halves = false;
  std::vector<BlockHalves> halves;

  int block_count() const { return static_cast<int>(blocks.size()); }
  long long min_block_size() const {
    long long m = std::numeric_limits<long long>::max();
    for (const auto& b : blocks) m = std::min<long long>(m, b.size());
    return m;
  }
  long long max_block_size() const {
    long long m = 0;
    for (const auto& b : blocks) m = std::max<long long>(m, b.size());
    return m;
  }
  // graph vertex -> block index (or -1 outside the volume)
  std::vector<int> block_of(int graph_vertex_count) const {
    std::vector<int> owner(graph_vertex_count, -1);
    for (int i = 0; i < block_count(); ++i)
      for (int v : blocks[i]) owner[v] = i;
    return owner;
  }
};

namespace detail {

inline bool subset_connected(const Graph& g, const std::vector<int>& set) {
  if (set.empty()) return false;
  std::vector<char> in(g.vertex_count(), 0), seen(g.vertex_count(), 0);
  for (int v : set) in[v] = 1;
  std::queue<int> q;
  q.push(set[0]);
  seen[set[0]] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int w : g.neighbors(v))
      if (in[w] && !seen[w]) {
        seen[w] = 1;
        ++reached;
        q.push(w);
      }
  }
  return reached == set.size();
}

// BFS distances inside a vertex subset.
inline std::vector<int> restricted_distances(const Graph& g,
                                             const std::vector<char>& in,
                                             int source) {
  std::vector<int> dist(g.vertex_count(), -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int w : g.neighbors(v))
      if (in[w] && dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
  }
  return dist;
}

}  // namespace detail

inline Partition partition_cover(const Graph& g, const std::vector<int>& volume,
                                 int ell) {
  if (ell < 1) throw std::invalid_argument("partition radius must be >= 1");
  if (!detail::subset_connected(g, volume))
    throw std::invalid_argument("partition volume must be connected");

  const int n = g.vertex_count();
  std::vector<char> in_volume(n, 0);
  for (int v : volume) in_volume[v] = 1;

  Partition part;
  part.radius = ell;

  // Greedy maximal packing: scan candidates (vertices whose ambient ball
  // fits inside the volume) in vertex order, keep those whose ball is
  // disjoint from every ball already chosen.
  std::vector<int> owner(n, -1);  // vertex -> center index owning it
  std::vector<int> order;         // sorted volume
  order = volume;
  std::sort(order.begin(), order.end());

  for (int x : order) {
    auto bx = g.ball(x, ell);
    bool fits = true;
    for (int y : bx)
      if (!in_volume[y] || owner[y] >= 0) {
        fits = false;
        break;
      }
    if (!fits) continue;
    int ci = static_cast<int>(part.centers.size());
    part.centers.push_back(x);
    for (int y : bx) owner[y] = ci;
  }

  if (part.centers.empty()) {
    // No ball of radius ell fits anywhere: degenerate single block.
    part.blocks.push_back(order);
    part.centers.push_back(order[0]);
    part.degenerate_single_block = true;
    part.certified = false;
    return part;
  }

  // Record how far the leftovers sit from the union of balls.
  {
    std::vector<int> dist(n, -1);
    std::queue<int> q;
    for (int v : order)
      if (owner[v] >= 0) {
        dist[v] = 0;
        q.push(v);
      }
    int far = -1;
    bool any_leftover = false;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int w : g.neighbors(v))
        if (in_volume[w] && dist[w] < 0) {
          dist[w] = dist[v] + 1;
          far = std::max(far, dist[w]);
          any_leftover = true;
          q.push(w);
        }
    }
    part.max_leftover_distance = any_leftover ? far : -1;
  }

  // Attach leftovers: synchronous BFS from all balls; a vertex joins the
  // first ball reaching it, lowest center index on ties within a layer.
  std::queue<int> frontier;
  for (int v : order)
    if (owner[v] >= 0) frontier.push(v);
  while (!frontier.empty()) {
    std::queue<int> next;
    // claim pass: smallest owner wins a contested vertex of this layer
    std::vector<std::pair<int, int>> claims;  // (vertex, owner)
    while (!frontier.empty()) {
      int v = frontier.front();
      frontier.pop();
      for (int w : g.neighbors(v))
        if (in_volume[w] && owner[w] < 0) claims.emplace_back(w, owner[v]);
    }
    std::sort(claims.begin(), claims.end());
    for (auto [w, ci] : claims)
      if (owner[w] < 0) {
        owner[w] = ci;
        next.push(w);
      }
    frontier = std::move(next);
  }

  part.blocks.assign(part.centers.size(), {});
  for (int v : order) part.blocks[owner[v]].push_back(v);
  for (auto& b : part.blocks) std::sort(b.begin(), b.end());

  // Verify containment B(x_i, ell) subset Lambda_i subset B(x_i, 3 ell).
  for (int i = 0; i < part.block_count(); ++i) {
    auto d = g.distances_from(part.centers[i]);
    for (int v : part.blocks[i])
      if (d[v] > 3 * ell) part.certified = false;
  }
  return part;
}

// Vertex of `half` whose ambient radius-r ball stays inside `half`,
// preferring the largest such ball (least clipped by the graph edge) and
// breaking ties toward the lowest vertex id; -1 if none qualifies.
inline int certified_center(const Graph& g, const std::vector<int>& half, int r) {
  std::vector<char> in(g.vertex_count(), 0);
  for (int v : half) in[v] = 1;
  int best = -1;
  std::size_t best_size = 0;
  for (int x : half) {
    auto b = g.ball(x, r);
    bool ok = true;
    for (int y : b)
      if (!in[y]) {
        ok = false;
        break;
      }
    if (ok && b.size() > best_size) {
      best = x;
      best_size = b.size();
    }
  }
  return best;
}

inline Partition halve_blocks(const Graph& g, const Partition& p) {
  Partition out = p;
  out.has_halves = true;
  out.halves.assign(p.block_count(), {});
  const int target_r = p.radius / 4;

  for (int i = 0; i < p.block_count(); ++i) {
    const auto& block = p.blocks[i];
    BlockHalves& h = out.halves[i];
    if (block.size() < 2) {
      h.plus = block;
      h.degenerate = true;
      continue;
    }

    std::vector<char> in(g.vertex_count(), 0);
    for (int v : block) in[v] = 1;

    // Diametral seed pair by double BFS inside the block.
    auto d0 = detail::restricted_distances(g, in, block[0]);
    int u = block[0];
    for (int v : block)
      if (d0[v] > d0[u]) u = v;
    auto du = detail::restricted_distances(g, in, u);
    int w = block[0];
    for (int v : block)
      if (du[v] > du[w]) w = v;
    int seed_plus = std::min(u, w), seed_minus = std::max(u, w);

    // Balanced two-source growth, one vertex at a time; the smaller half
    // extends first, frontier vertices taken in ascending id.
    std::vector<int> side(g.vertex_count(), -1);
    side[seed_plus] = 0;
    side[seed_minus] = 1;
    std::vector<std::vector<int>> frontier(2);
    frontier[0].push_back(seed_plus);
    frontier[1].push_back(seed_minus);
    std::size_t count[2] = {1, 1};
    std::size_t assigned = 2;
    while (assigned < block.size()) {
      int s = (count[0] <= count[1]) ? 0 : 1;
      // find the smallest unassigned neighbor of side s's region
      int pick = -1;
      for (int v : frontier[s])
        for (int nb : g.neighbors(v))
          if (in[nb] && side[nb] < 0 && (pick < 0 || nb < pick)) pick = nb;
      if (pick < 0) {
        s = 1 - s;  // this side is walled in; let the other take the rest
        for (int v : frontier[s])
          for (int nb : g.neighbors(v))
            if (in[nb] && side[nb] < 0 && (pick < 0 || nb < pick)) pick = nb;
      }
      side[pick] = s;
      frontier[s].push_back(pick);
      ++count[s];
      ++assigned;
    }
    for (int v : block) (side[v] == 0 ? h.plus : h.minus).push_back(v);
    std::sort(h.plus.begin(), h.plus.end());
    std::sort(h.minus.begin(), h.minus.end());

    h.center_plus = certified_center(g, h.plus, target_r);
    h.center_minus = certified_center(g, h.minus, target_r);
    if (h.center_plus >= 0 && h.center_minus >= 0 && target_r > 0) {
      h.certified_radius = target_r;
    } else {
      // fall back to any vertex; radius certificate degrades to 0
      h.certified_radius = 0;
      if (h.center_plus < 0) h.center_plus = h.plus.front();
      if (h.center_minus < 0) h.center_minus = h.minus.front();
    }
  }
  return out;
}

struct PartitionCheck {
  bool disjoint_cover = false;
  bool blocks_connected = false;
  bool inner_ball_contained = false;  // B(x_i, ell) subset Lambda_i
  bool outer_ball_contains = false;   // Lambda_i subset B(x_i, 3 ell)
  bool halves_connected = true;
  bool halves_certified = true;
  bool all() const {
    return disjoint_cover && blocks_connected && inner_ball_contained &&
           outer_ball_contains && halves_connected && halves_certified;
  }
};

inline PartitionCheck check_partition(const Graph& g,
                                      const std::vector<int>& volume,
                                      const Partition& p) {
  PartitionCheck c;
  std::vector<int> covered;
  for (const auto& b : p.blocks) covered.insert(covered.end(), b.begin(), b.end());
  std::sort(covered.begin(), covered.end());
  auto vol = volume;
  std::sort(vol.begin(), vol.end());
  c.disjoint_cover =
      covered == vol &&
      std::adjacent_find(covered.begin(), covered.end()) == covered.end();

  c.blocks_connected = true;
  for (const auto& b : p.blocks)
    if (!detail::subset_connected(g, b)) c.blocks_connected = false;

  c.inner_ball_contained = true;
  c.outer_ball_contains = true;
  for (int i = 0; i < p.block_count(); ++i) {
    std::vector<char> in(g.vertex_count(), 0);
    for (int v : p.blocks[i]) in[v] = 1;
    for (int y : g.ball(p.centers[i], p.radius))
      if (!in[y]) c.inner_ball_contained = false;
    auto d = g.distances_from(p.centers[i]);
    for (int v : p.blocks[i])
      if (d[v] > 3 * p.radius) c.outer_ball_contains = false;
  }

  if (p.has_halves) {
    for (int i = 0; i < p.block_count(); ++i) {
      const auto& h = p.halves[i];
      if (h.degenerate) continue;
      if (!detail::subset_connected(g, h.plus) ||
          !detail::subset_connected(g, h.minus))
        c.halves_connected = false;
      for (auto [half, center] :
           {std::make_pair(&h.plus, h.center_plus),
            std::make_pair(&h.minus, h.center_minus)}) {
        std::vector<char> in(g.vertex_count(), 0);
        for (int v : *half) in[v] = 1;
        for (int y : g.ball(center, h.certified_radius))
          if (!in[y]) c.halves_certified = false;
      }
    }
  }
  return c;
}

}  // namespace kcmlab
