#pragma once

// Finite graphs with metric queries: lattices, adjacency-file graphs,
// BFS balls, growth-function certificates.
//
// Vertex ordering convention: lattices are row-major (last coordinate
// fastest); general graphs keep the order of their input file. This order
// is load-bearing: partition construction and all tie-breaking rules are
// defined relative to it.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace kcmlab {

class Graph {
 public:
  Graph(int vertex_count, std::vector<std::vector<int>> adjacency,
        std::string label)
      : n_(vertex_count), adj_(std::move(adjacency)), label_(std::move(label)) {
    validate();
  }

  // copies and moves drop the BFS row cache (it is only a memo)
  Graph(const Graph& other) : n_(other.n_), adj_(other.adj_), label_(other.label_) {}
  Graph(Graph&& other) noexcept
      : n_(other.n_), adj_(std::move(other.adj_)), label_(std::move(other.label_)) {}
  Graph& operator=(const Graph& other) {
    n_ = other.n_;
    adj_ = other.adj_;
    label_ = other.label_;
    row_cache_.clear();
    return *this;
  }
  Graph& operator=(Graph&& other) noexcept {
    n_ = other.n_;
    adj_ = std::move(other.adj_);
    label_ = std::move(other.label_);
    row_cache_.clear();
    return *this;
  }

  int vertex_count() const { return n_; }
  const std::string& label() const { return label_; }
  const std::vector<int>& neighbors(int x) const { return adj_[x]; }
  int degree(int x) const { return static_cast<int>(adj_[x].size()); }

  // BFS distances from x to every vertex.
  std::vector<int> distances_from(int x) const {
    check_vertex(x);
    if (n_ <= kRowCacheLimit) {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = row_cache_.find(x);
      if (it != row_cache_.end()) return it->second;
      auto row = bfs(x);
      row_cache_.emplace(x, row);
      return row;
    }
    return bfs(x);
  }

  int distance(int x, int y) const { return distances_from(x)[y]; }

  // B(x, r) = {y : d(x, y) <= r}, sorted by vertex id.
  std::vector<int> ball(int x, int r) const {
    check_vertex(x);
    if (r < 0) throw std::invalid_argument("ball radius must be >= 0");
    std::vector<int> dist(n_, -1);
    std::vector<int> out;
    std::queue<int> q;
    dist[x] = 0;
    q.push(x);
    out.push_back(x);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      if (dist[v] == r) continue;
      for (int w : adj_[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          out.push_back(w);
          q.push(w);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  int diameter_of(const std::vector<int>& subset) const {
    int diam = 0;
    for (int x : subset) {
      auto d = distances_from(x);
      for (int y : subset) diam = std::max(diam, d[y]);
    }
    return diam;
  }

 private:
  static constexpr int kRowCacheLimit = 4096;

  void check_vertex(int x) const {
    if (x < 0 || x >= n_) throw std::out_of_range("vertex id out of range");
  }

  std::vector<int> bfs(int x) const {
    std::vector<int> dist(n_, -1);
    std::queue<int> q;
    dist[x] = 0;
    q.push(x);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int w : adj_[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
      }
    }
    return dist;
  }

  void validate() {
    if (n_ <= 0) throw std::invalid_argument("graph must have vertices");
    if (static_cast<int>(adj_.size()) != n_)
      throw std::invalid_argument("adjacency size mismatch");
    for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
    for (int x = 0; x < n_; ++x) {
      for (std::size_t i = 0; i < adj_[x].size(); ++i) {
        int y = adj_[x][i];
        if (y < 0 || y >= n_) throw std::invalid_argument("edge endpoint out of range");
        if (y == x) throw std::invalid_argument("self-loop");
        if (i > 0 && adj_[x][i - 1] == y) throw std::invalid_argument("duplicate edge");
        if (!std::binary_search(adj_[y].begin(), adj_[y].end(), x))
          throw std::invalid_argument("asymmetric adjacency");
      }
    }
    auto d = bfs(0);
    for (int x = 0; x < n_; ++x)
      if (d[x] < 0) throw std::invalid_argument("graph must be connected");
  }

  int n_;
  std::vector<std::vector<int>> adj_;
  std::string label_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<int, std::vector<int>> row_cache_;
};

// Nearest-neighbor lattice, row-major vertex order (last axis fastest).
// Periodic lattices need side >= 3 so that wrap edges are simple.
inline Graph build_lattice(const std::vector<int>& dims, bool periodic) {
  if (dims.empty()) throw std::invalid_argument("lattice needs at least one dimension");
  long long n = 1;
  for (int side : dims) {
    if (side < 2) throw std::invalid_argument("lattice side must be >= 2");
    if (periodic && side < 3)
      throw std::invalid_argument("periodic lattice side must be >= 3");
    n *= side;
  }
  const int d = static_cast<int>(dims.size());
  std::vector<long long> stride(d, 1);
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * dims[a + 1];

  std::vector<std::vector<int>> adj(n);
  std::vector<int> coord(d, 0);
  for (long long v = 0; v < n; ++v) {
    for (int a = 0; a < d; ++a) {
      for (int step : {-1, +1}) {
        int c = coord[a] + step;
        if (periodic) {
          c = (c + dims[a]) % dims[a];
        } else if (c < 0 || c >= dims[a]) {
          continue;
        }
        long long w = v + (static_cast<long long>(c) - coord[a]) * stride[a];
        adj[v].push_back(static_cast<int>(w));
      }
    }
    // advance row-major coordinates
    for (int a = d - 1; a >= 0; --a) {
      if (++coord[a] < dims[a]) break;
      coord[a] = 0;
    }
  }

  std::ostringstream label;
  label << "Z" << d << "-" << (periodic ? "torus" : (d == 1 ? "segment" : "box"))
        << "-";
  for (int a = 0; a < d; ++a) label << (a ? "x" : "") << dims[a];
  return Graph(static_cast<int>(n), std::move(adj), label.str());
}

// Plain-text edge list, one "u v" pair per line, 0-indexed.
inline Graph read_adjacency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open adjacency file: " + path);
  std::vector<std::pair<int, int>> edges;
  int max_v = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int u, v;
    if (!(ls >> u >> v)) throw std::runtime_error("bad edge line: " + line);
    edges.emplace_back(u, v);
    max_v = std::max({max_v, u, v});
  }
  std::vector<std::vector<int>> adj(max_v + 1);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return Graph(max_v + 1, std::move(adj), "file:" + path);
}

// F(r) = sup_x |B(x, r)|.
inline long long growth_function(const Graph& g, int r) {
  if (r < 1) throw std::invalid_argument("growth function needs r >= 1");
  long long best = 0;
  for (int x = 0; x < g.vertex_count(); ++x)
    best = std::max(best, static_cast<long long>(g.ball(x, r).size()));
  return best;
}

struct GrowthCertificate {
  double k = 0;
  double D = 0;
  int r_max = 0;
  std::vector<std::pair<int, long long>> observed;  // (r, F(r))
};

struct GrowthCheckResult {
  bool ok = false;
  GrowthCertificate certificate;
  // populated when !ok: smallest violating radius and the numbers there
  int violating_r = -1;
  long long f_at_violation = 0;
  double bound_at_violation = 0;
};

// Verifies F(r) <= k r^D for r = 1..r_max.
inline GrowthCheckResult check_polynomial_growth(const Graph& g, double k,
                                                 double D, int r_max) {
  if (k <= 0 || D <= 0 || r_max < 1)
    throw std::invalid_argument("check_polynomial_growth: need k, D > 0 and r_max >= 1");
  GrowthCheckResult res;
  res.certificate.k = k;
  res.certificate.D = D;
  res.certificate.r_max = r_max;
  for (int r = 1; r <= r_max; ++r) {
    long long f = growth_function(g, r);
    res.certificate.observed.emplace_back(r, f);
    double bound = k * std::pow(static_cast<double>(r), D);
    if (static_cast<double>(f) > bound) {
      res.ok = false;
      res.violating_r = r;
      res.f_at_violation = f;
      res.bound_at_violation = bound;
      return res;
    }
  }
  res.ok = true;
  return res;
}

}  // namespace kcmlab
