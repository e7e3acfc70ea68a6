#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sociallearn/rng.hpp"

namespace sociallearn {

/// Undirected simple graph over agents [0, n). Adjacency lists are sorted.
/// `labels` maps dense indices back to original node ids when the graph came
/// from a file or a k-core (empty otherwise).
class Topology {
 public:
  Topology() = default;

  explicit Topology(int n_nodes) : adj_(static_cast<std::size_t>(n_nodes)) {
    if (n_nodes < 0) throw std::invalid_argument("Topology: negative node count");
  }

  /// Builds from an edge list; duplicates collapse and self-loops are dropped.
  static Topology from_edges(int n_nodes, const std::vector<std::pair<int, int>>& edges) {
    Topology t(n_nodes);
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes) throw std::invalid_argument("Topology: node out of range");
      if (a == b) continue;
      t.adj_[static_cast<std::size_t>(a)].push_back(b);
      t.adj_[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& nbrs : t.adj_) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return t;
  }

  int size() const noexcept { return static_cast<int>(adj_.size()); }
  const std::vector<int>& neighbors(int i) const { return adj_[static_cast<std::size_t>(i)]; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }

  int min_degree() const {
    int m = size() ? degree(0) : 0;
    for (int i = 1; i < size(); ++i) m = std::min(m, degree(i));
    return m;
  }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& nbrs : adj_) twice += nbrs.size();
    return twice / 2;
  }

  bool has_edge(int a, int b) const {
    const auto& nbrs = neighbors(a);
    return std::binary_search(nbrs.begin(), nbrs.end(), b);
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < size(); ++i)
      for (int j : neighbors(i))
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  bool is_connected() const {
    if (size() == 0) return false;
    std::vector<char> seen(adj_.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : neighbors(v))
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          ++visited;
          stack.push_back(w);
        }
    }
    return visited == size();
  }

  const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<std::int64_t> labels) {
    if (!labels.empty() && labels.size() != adj_.size()) throw std::invalid_argument("Topology: label count mismatch");
    labels_ = std::move(labels);
  }

  /// Original id of dense node i (i itself when no labels are recorded).
  std::int64_t label(int i) const { return labels_.empty() ? i : labels_[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Topology& a, const Topology& b) { return a.adj_ == b.adj_; }

 private:
  std::vector<std::vector<int>> adj_;
  std::vector<std::int64_t> labels_;
};

inline Topology complete_topology(int n) {
  if (n < 2) throw std::invalid_argument("complete_topology: need at least 2 nodes");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return Topology::from_edges(n, edges);
}

namespace detail {

// Adjacency bit matrix; triangle counts become popcounts of row intersections.
class BitAdjacency {
 public:
  explicit BitAdjacency(const Topology& t)
      : n_(t.size()), words_((static_cast<std::size_t>(n_) + 63) / 64), bits_(static_cast<std::size_t>(n_) * words_) {
    for (int i = 0; i < n_; ++i)
      for (int j : t.neighbors(i)) set(i, j, true);
  }

  void set(int a, int b, bool on) {
    auto& w = bits_[static_cast<std::size_t>(a) * words_ + static_cast<std::size_t>(b) / 64];
    const std::uint64_t m = std::uint64_t{1} << (b % 64);
    w = on ? (w | m) : (w & ~m);
  }

  int common(int a, int b) const {
    int c = 0;
    const auto* ra = &bits_[static_cast<std::size_t>(a) * words_];
    const auto* rb = &bits_[static_cast<std::size_t>(b) * words_];
    for (std::size_t w = 0; w < words_; ++w) c += __builtin_popcountll(ra[w] & rb[w]);
    return c;
  }

 private:
  int n_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

inline double local_clustering(const std::vector<std::vector<int>>& adj, const BitAdjacency& bits, int i) {
  const auto& nbrs = adj[static_cast<std::size_t>(i)];
  const auto d = static_cast<double>(nbrs.size());
  if (nbrs.size() < 2) return 0.0;
  long links = 0;
  for (int j : nbrs) links += bits.common(i, j);
  // Each neighbor-neighbor link is seen from both endpoints.
  return static_cast<double>(links) / (d * (d - 1.0));
}

}  // namespace detail

/// Mean of local clustering coefficients; nodes with degree < 2 count as 0.
inline double mean_clustering(const Topology& t) {
  if (t.size() == 0) return 0.0;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(t.size()));
  for (int i = 0; i < t.size(); ++i) adj[static_cast<std::size_t>(i)] = t.neighbors(i);
  detail::BitAdjacency bits(t);
  double sum = 0.0;
  for (int i = 0; i < t.size(); ++i) sum += detail::local_clustering(adj, bits, i);
  return sum / t.size();
}

/// Seeded random connected degree-regular graph: a circulant lattice
/// scrambled by many random double-edge swaps that keep the graph simple
/// and connected.
inline Topology random_regular(int n, int degree, std::uint64_t seed) {
  if (degree < 1 || degree >= n || (static_cast<long>(n) * degree) % 2 != 0)
    throw std::invalid_argument("random_regular: infeasible (n, degree) pair");
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int off = 1; off <= degree / 2; ++off) edges.emplace_back(i, (i + off) % n);
    if (degree % 2 == 1 && i < n / 2) edges.emplace_back(i, i + n / 2);
  }
  Topology lattice = Topology::from_edges(n, edges);
  if (lattice.min_degree() != degree || static_cast<int>(lattice.edge_count()) * 2 != n * degree)
    throw std::invalid_argument("random_regular: infeasible (n, degree) pair");
  edges = lattice.edges();

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) adj[static_cast<std::size_t>(i)] = lattice.neighbors(i);
  auto has = [&](int a, int b) {
    const auto& v = adj[static_cast<std::size_t>(a)];
    return std::find(v.begin(), v.end(), b) != v.end();
  };
  auto drop = [&](int a, int b) {
    auto& v = adj[static_cast<std::size_t>(a)];
    v.erase(std::find(v.begin(), v.end(), b));
  };
  Rng rng(derive_seed(seed, Stream::kTopology, n, degree));
  const std::size_t m = edges.size();
  const std::size_t scramble = 10 * m;
  for (std::size_t it = 0; it < scramble; ++it) {
    const auto e1 = rng.below(m);
    const auto e2 = rng.below(m);
    if (e1 == e2) continue;
    auto [a, b] = edges[e1];
    auto [c, d] = edges[e2];
    if (rng.bernoulli(0.5)) std::swap(c, d);
    // (a,b),(c,d) -> (a,d),(c,b)
    if (a == d || c == b || has(a, d) || has(c, b)) continue;
    drop(a, b), drop(b, a), drop(c, d), drop(d, c);
    adj[static_cast<std::size_t>(a)].push_back(d), adj[static_cast<std::size_t>(d)].push_back(a);
    adj[static_cast<std::size_t>(c)].push_back(b), adj[static_cast<std::size_t>(b)].push_back(c);
    edges[e1] = {a, d};
    edges[e2] = {c, b};
  }
  Topology out = Topology::from_edges(n, edges);
  // Scrambling rarely disconnects a dense regular graph; redraw if it does.
  if (!out.is_connected()) return random_regular(n, degree, mix64(seed));
  return out;
}

/// Greedy degree-preserving rewiring toward maximal mean clustering.
///
/// Starts from random_regular(n, degree, seed); each of `swap_budget`
/// proposals picks two edges and a random reconnection, and is kept iff the
/// mean clustering strictly increases and the graph stays connected.
inline Topology max_mean_clustering(int n, int degree, long swap_budget, std::uint64_t seed) {
  Topology start = random_regular(n, degree, seed);
  if (swap_budget <= 0) return start;

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) adj[static_cast<std::size_t>(i)] = start.neighbors(i);
  std::vector<std::pair<int, int>> edges = start.edges();
  detail::BitAdjacency bits(start);
  std::vector<double> local(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += (local[static_cast<std::size_t>(i)] = detail::local_clustering(adj, bits, i));

  auto replace = [&](int a, int from, int to) {
    auto& v = adj[static_cast<std::size_t>(a)];
    *std::find(v.begin(), v.end(), from) = to;
  };
  auto connected = [&] {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : adj[static_cast<std::size_t>(v)])
        if (!seen[static_cast<std::size_t>(w)]) seen[static_cast<std::size_t>(w)] = 1, ++visited, stack.push_back(w);
    }
    return visited == n;
  };

  Rng rng(derive_seed(seed, Stream::kTopology, n, degree, 1));
  const std::size_t m = edges.size();
  std::vector<int> touched;
  std::vector<double> saved;
  for (long it = 0; it < swap_budget; ++it) {
    const auto e1 = rng.below(m);
    const auto e2 = rng.below(m);
    if (e1 == e2) continue;
    auto [a, b] = edges[e1];
    auto [c, d] = edges[e2];
    if (rng.bernoulli(0.5)) std::swap(c, d);
    if (a == d || c == b || a == c || b == d) continue;
    if (std::find(adj[static_cast<std::size_t>(a)].begin(), adj[static_cast<std::size_t>(a)].end(), d) !=
            adj[static_cast<std::size_t>(a)].end() ||
        std::find(adj[static_cast<std::size_t>(c)].begin(), adj[static_cast<std::size_t>(c)].end(), b) !=
            adj[static_cast<std::size_t>(c)].end())
      continue;

    auto apply = [&](int a0, int b0, int c0, int d0) {
      // (a0,b0),(c0,d0) -> (a0,d0),(c0,b0)
      replace(a0, b0, d0), replace(b0, a0, c0), replace(c0, d0, b0), replace(d0, c0, a0);
      bits.set(a0, b0, false), bits.set(b0, a0, false), bits.set(c0, d0, false), bits.set(d0, c0, false);
      bits.set(a0, d0, true), bits.set(d0, a0, true), bits.set(c0, b0, true), bits.set(b0, c0, true);
    };
    apply(a, b, c, d);

    // Only the four endpoints and their (current) neighbors can change
    // clustering: a common neighbor of a removed pair is still adjacent to
    // both endpoints.
    touched.clear();
    for (int v : {a, b, c, d}) {
      touched.push_back(v);
      for (int w : adj[static_cast<std::size_t>(v)]) touched.push_back(w);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    saved.clear();
    double next = total;
    for (int v : touched) {
      saved.push_back(local[static_cast<std::size_t>(v)]);
      const double lc = detail::local_clustering(adj, bits, v);
      next += lc - local[static_cast<std::size_t>(v)];
      local[static_cast<std::size_t>(v)] = lc;
    }

    if (next > total + 1e-12 && connected()) {
      total = next;
      edges[e1] = {a, d};
      edges[e2] = {c, b};
    } else {
      for (std::size_t s = 0; s < touched.size(); ++s) local[static_cast<std::size_t>(touched[s])] = saved[s];
      // Undo: (a,d),(c,b) -> (a,b),(c,d)
      apply(a, d, c, b);
    }
  }
  return Topology::from_edges(n, edges);
}

/// Reads whitespace-separated integer pairs; '#' lines and blank lines are
/// skipped. Node ids are relabeled densely in first-seen order and the
/// original ids are kept as labels.
inline Topology load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_edge_list: cannot open " + path);
  std::map<std::int64_t, int> ids;
  std::vector<std::int64_t> labels;
  std::vector<std::pair<int, int>> edges;
  auto id_of = [&](std::int64_t raw) {
    auto [it, inserted] = ids.emplace(raw, static_cast<int>(labels.size()));
    if (inserted) labels.push_back(raw);
    return it->second;
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::string rest;
    if (!(ss >> a >> b) || (ss >> rest))
      throw std::runtime_error("load_edge_list: unparseable line " + std::to_string(line_no) + " in " + path);
    if (a == b) continue;
    const int ia = id_of(a);  // ids follow first appearance, left to right
    const int ib = id_of(b);
    edges.emplace_back(ia, ib);
  }
  if (edges.empty()) throw std::runtime_error("load_edge_list: empty graph in " + path);
  Topology t = Topology::from_edges(static_cast<int>(labels.size()), edges);
  t.set_labels(std::move(labels));
  return t;
}

/// Writes "a b" lines using the original labels; a `<path>.map` sidecar
/// records "dense_index original_id" when labels are present.
inline void save_edge_list(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_edge_list: cannot write " + path);
  out << "# nodes " << t.size() << " edges " << t.edge_count() << '\n';
  for (auto [a, b] : t.edges()) out << t.label(a) << ' ' << t.label(b) << '\n';
  if (!t.labels().empty()) {
    std::ofstream map(path + ".map");
    if (!map) throw std::runtime_error("save_edge_list: cannot write " + path + ".map");
    for (int i = 0; i < t.size(); ++i) map << i << ' ' << t.label(i) << '\n';
  }
}

/// Repeatedly removes nodes with degree < k. Survivors are relabeled densely
/// (in increasing index order); labels carry the original ids through.
inline Topology k_core(const Topology& t, int k) {
  if (k < 1) throw std::invalid_argument("k_core: k must be >= 1");
  const int n = t.size();
  std::vector<int> deg(static_cast<std::size_t>(n));
  std::vector<char> removed(static_cast<std::size_t>(n), 0);
  std::vector<int> queue;
  for (int i = 0; i < n; ++i) {
    deg[static_cast<std::size_t>(i)] = t.degree(i);
    if (deg[static_cast<std::size_t>(i)] < k) removed[static_cast<std::size_t>(i)] = 1, queue.push_back(i);
  }
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    for (int w : t.neighbors(v)) {
      if (removed[static_cast<std::size_t>(w)]) continue;
      if (--deg[static_cast<std::size_t>(w)] < k) removed[static_cast<std::size_t>(w)] = 1, queue.push_back(w);
    }
  }
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> labels;
  for (int i = 0; i < n; ++i)
    if (!removed[static_cast<std::size_t>(i)]) {
      remap[static_cast<std::size_t>(i)] = static_cast<int>(labels.size());
      labels.push_back(t.label(i));
    }
  std::vector<std::pair<int, int>> edges;
  for (auto [a, b] : t.edges())
    if (!removed[static_cast<std::size_t>(a)] && !removed[static_cast<std::size_t>(b)])
      edges.emplace_back(remap[static_cast<std::size_t>(a)], remap[static_cast<std::size_t>(b)]);
  Topology core = Topology::from_edges(static_cast<int>(labels.size()), edges);
  core.set_labels(std::move(labels));
  return core;
}

struct NetworkReport {
  double removed_fraction = 0.0;
  bool connected = false;
  int n_original = 0;
  int n_core = 0;
  int min_degree = 0;
  bool accepted = false;
  std::vector<std::string> reasons;

  nlohmann::json to_json() const {
    return {{"removed_fraction", removed_fraction},
            {"connected", connected},
            {"n_original", n_original},
            {"n_core", n_core},
            {"min_degree", min_degree},
            {"accepted", accepted},
            {"reasons", reasons}};
  }
};

/// Acceptance rules for an ingested real network after its 3-core
/// decomposition: fewer than 5% of nodes removed, a connected core of at
/// most `max_nodes` nodes, and minimum core degree >= 3 so three distinct
/// neighbors can always be sampled.
inline NetworkReport validate_real_network(const Topology& original, const Topology& core, int max_nodes = 500,
                                           double max_removed_fraction = 0.05, int min_degree = 3) {
  NetworkReport r;
  r.n_original = original.size();
  r.n_core = core.size();
  r.removed_fraction =
      original.size() ? static_cast<double>(original.size() - core.size()) / static_cast<double>(original.size()) : 1.0;
  r.connected = core.is_connected();
  r.min_degree = core.min_degree();
  if (!(r.removed_fraction < max_removed_fraction)) r.reasons.emplace_back("removal fraction");
  if (!r.connected) r.reasons.emplace_back("disconnected");
  if (r.n_core > max_nodes) r.reasons.emplace_back("too many nodes");
  if (r.n_core == 0 || r.min_degree < min_degree) r.reasons.emplace_back("minimum degree");
  r.accepted = r.reasons.empty();
  return r;
}

}  // namespace sociallearn
