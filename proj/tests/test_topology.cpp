#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sociallearn/rng.hpp"
#include "sociallearn/topology.hpp"

using namespace sociallearn;

namespace {

// O(n d^2) triangle counting straight from neighbor lists.
double clustering_oracle(const Topology& t) {
  double total = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const auto& nb = t.neighbors(i);
    const double k = static_cast<double>(nb.size());
    if (k < 2) continue;
    int links = 0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b) links += t.has_edge(nb[a], nb[b]);
    total += 2.0 * links / (k * (k - 1));
  }
  return total / t.size();
}

// Naive repeated scan: drop any node whose live degree is < k until stable.
std::set<std::int64_t> kcore_oracle(const Topology& t, int k) {
  std::set<int> alive;
  for (int i = 0; i < t.size(); ++i) alive.insert(i);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i : std::set<int>(alive)) {
      int deg = 0;
      for (int j : t.neighbors(i)) deg += alive.count(j);
      if (deg < k) alive.erase(i), changed = true;
    }
  }
  std::set<std::int64_t> out;
  for (int i : alive) out.insert(t.label(i));
  return out;
}

Topology random_graph(int n, double p, std::uint64_t seed) {
  Rng r(seed);
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (r.bernoulli(p)) e.emplace_back(i, j);
  return Topology::from_edges(n, e);
}

std::string temp_file(const std::string& name, const std::string& contents) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << contents;
  return p.string();
}

}  // namespace

TEST(Topology, CompleteGraph) {
  auto t3 = complete_topology(3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(t3.degree(i), 2);
  auto t = complete_topology(100);
  EXPECT_EQ(t.edge_count(), 4950u);
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j) EXPECT_EQ(t.has_edge(i, j), t.has_edge(j, i));
}

TEST(Topology, ClusteringSmallCases) {
  EXPECT_DOUBLE_EQ(mean_clustering(complete_topology(5)), 1.0);
  EXPECT_DOUBLE_EQ(mean_clustering(Topology::from_edges(3, {{0, 1}, {1, 2}})), 0.0);
}

TEST(Topology, ClusteringMatchesTriangleOracle) {
  auto t = random_regular(100, 19, 4);
  EXPECT_NEAR(mean_clustering(t), clustering_oracle(t), 1e-12);
  auto g = random_graph(80, 0.1, 8);
  EXPECT_NEAR(mean_clustering(g), clustering_oracle(g), 1e-12);
}

TEST(Topology, RandomRegularIsRegularAndConnected) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto t = random_regular(100, 19, seed);
    EXPECT_TRUE(t.is_connected());
    for (int i = 0; i < 100; ++i) EXPECT_EQ(t.degree(i), 19);
  }
  EXPECT_THROW(random_regular(5, 3, 1), std::invalid_argument);  // odd n * d
}

TEST(Topology, MaxMeanClusteringPreservesDegreesAndImproves) {
  auto start = random_regular(100, 19, 11);
  auto t = max_mean_clustering(100, 19, 20000, 11);
  EXPECT_TRUE(t.is_connected());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(t.degree(i), 19);
  EXPECT_GE(mean_clustering(t), mean_clustering(start));
  EXPECT_GT(mean_clustering(t), mean_clustering(start) + 0.1);
  EXPECT_NEAR(mean_clustering(t), clustering_oracle(t), 1e-12);
}

TEST(Topology, MaxMeanClusteringZeroBudgetIsInitialGraph) {
  EXPECT_EQ(max_mean_clustering(60, 7 * 2, 0, 5), random_regular(60, 14, 5));
}

TEST(Topology, EdgeListLoading) {
  auto a = load_edge_list(temp_file("sl_el_a.txt", "0 1\n1 2\n"));
  EXPECT_EQ(a.size(), 3);
  EXPECT_EQ(a.edge_count(), 2u);
  auto b = load_edge_list(temp_file("sl_el_b.txt", "0 1\n1 0\n"));
  EXPECT_EQ(b.edge_count(), 1u);
  EXPECT_THROW(load_edge_list(temp_file("sl_el_c.txt", "5 5\n")), std::runtime_error);
  EXPECT_THROW(load_edge_list(temp_file("sl_el_d.txt", "1 2 3\n")), std::runtime_error);
}

TEST(Topology, EdgeListRoundTripKeepsLabels) {
  auto t = load_edge_list(temp_file("sl_el_e.txt", "# comment\n10 20\n20 30\n30 10\n30 40\n"));
  const auto out = (std::filesystem::temp_directory_path() / "sl_el_out.txt").string();
  save_edge_list(t, out);
  auto back = load_edge_list(out);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.labels(), t.labels());
  EXPECT_TRUE(std::filesystem::exists(out + ".map"));
}

TEST(Topology, KCoreExamples) {
  EXPECT_EQ(k_core(complete_topology(5), 3).size(), 5);
  std::vector<std::pair<int, int>> star;
  for (int i = 1; i <= 6; ++i) star.emplace_back(0, i);
  EXPECT_EQ(k_core(Topology::from_edges(7, star), 2).size(), 0);
}

TEST(Topology, KCoreMatchesPeelingOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(60, 0.06, seed);
    for (int k = 1; k <= 4; ++k) {
      auto core = k_core(g, k);
      std::set<std::int64_t> got;
      for (int i = 0; i < core.size(); ++i) got.insert(core.label(i));
      EXPECT_EQ(got, kcore_oracle(g, k));
      if (core.size() > 0) EXPECT_GE(core.min_degree(), k);
      EXPECT_EQ(k_core(core, k), core);  // idempotent
    }
  }
}

TEST(Topology, RealNetworkValidation) {
  auto full = complete_topology(100);
  auto rep = validate_real_network(full, k_core(full, 3));
  EXPECT_TRUE(rep.accepted);
  EXPECT_DOUBLE_EQ(rep.removed_fraction, 0.0);

  // 90-node complete graph plus 10 pendant nodes: the 3-core drops 10%.
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < 90; ++i)
    for (int j = i + 1; j < 90; ++j) e.emplace_back(i, j);
  for (int i = 90; i < 100; ++i) e.emplace_back(i, 0);
  auto g = Topology::from_edges(100, e);
  auto r2 = validate_real_network(g, k_core(g, 3));
  EXPECT_FALSE(r2.accepted);
  ASSERT_EQ(r2.reasons.size(), 1u);
  EXPECT_EQ(r2.reasons[0], "removal fraction");
}
