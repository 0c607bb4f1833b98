#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cge/errors.hpp"
#include "cge/geograph.hpp"
#include "cge/rng.hpp"

using cge::Graph;
using cge::Rng;

namespace {

// independent shortest-path oracle
std::vector<std::vector<int>> floyd_warshall(const Graph& g) {
    const int m = g.num_nodes;
    const int inf = 1 << 20;
    std::vector<std::vector<int>> d(static_cast<std::size_t>(m),
                                    std::vector<int>(static_cast<std::size_t>(m), inf));
    for (int i = 0; i < m; ++i) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0;
    for (const auto& [i, j] : g.edges) {
        d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
        d[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = 1;
    }
    for (int k = 0; k < m; ++k) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    std::min(d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                             d[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                                 d[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
            }
        }
    }
    return d;
}

Graph random_graph(Rng& rng, int m, double p_edge) {
    Graph g;
    g.num_nodes = m;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            if (rng.uniform() < p_edge) g.edges.emplace_back(i, j);
        }
    }
    return g;
}

}  // namespace

TEST_CASE("binomial coefficients") {
    CHECK(cge::binomial(0, 0) == 1);
    CHECK(cge::binomial(5, 0) == 1);
    CHECK(cge::binomial(5, 5) == 1);
    CHECK(cge::binomial(5, 2) == 10);
    CHECK(cge::binomial(12, 6) == 924);
    CHECK(cge::binomial(4, 7) == 0);
    CHECK(cge::binomial(60, 30) == 118264581564861424ull);
    CHECK_THROWS_AS(cge::binomial(100, 50), cge::ConfigError);
}

TEST_CASE("complete graphs and adjacency validation") {
    Graph g = Graph::complete(5);
    CHECK(g.edges.size() == 10);
    auto adj = g.adjacency();
    for (int i = 0; i < 5; ++i) {
        CHECK(adj[static_cast<std::size_t>(i)].size() == 4);
        CHECK(std::is_sorted(adj[static_cast<std::size_t>(i)].begin(),
                             adj[static_cast<std::size_t>(i)].end()));
    }
    Graph bad;
    bad.num_nodes = 3;
    bad.edges = {{1, 0}};
    CHECK_THROWS_AS(bad.adjacency(), cge::ConfigError);
    bad.edges = {{0, 1}, {0, 1}};
    CHECK_THROWS_AS(bad.adjacency(), cge::ConfigError);
    bad.edges = {{0, 3}};
    CHECK_THROWS_AS(bad.adjacency(), cge::ConfigError);
}

TEST_CASE("k-hop neighborhoods agree with a Floyd-Warshall oracle on random graphs") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 2 + static_cast<int>(rng.below(11));  // up to 12 nodes
        Graph g = random_graph(rng, m, 0.35);
        const auto dist = floyd_warshall(g);
        for (int k = 0; k <= 3; ++k) {
            const auto hoods = cge::k_hop_neighborhoods(g, k);
            for (int i = 0; i < m; ++i) {
                std::vector<int> expect;
                for (int j = 0; j < m; ++j) {
                    const int d = dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    if (j != i && d >= 1 && d <= k) expect.push_back(j);
                }
                CHECK(hoods[static_cast<std::size_t>(i)] == expect);
            }
        }
    }
}

TEST_CASE("k = 0 gives empty neighborhoods; k = 1 gives direct neighbors") {
    Graph g;
    g.num_nodes = 4;
    g.edges = {{0, 1}, {1, 2}, {2, 3}};
    auto h0 = cge::k_hop_neighborhoods(g, 0);
    for (const auto& list : h0) CHECK(list.empty());
    auto h1 = cge::k_hop_neighborhoods(g, 1);
    CHECK(h1[0] == std::vector<int>{1});
    CHECK(h1[1] == (std::vector<int>{0, 2}));
    auto h2 = cge::k_hop_neighborhoods(g, 2);
    CHECK(h2[0] == (std::vector<int>{1, 2}));
    CHECK(h2[3] == (std::vector<int>{1, 2}));
}

TEST_CASE("subset enumeration is lexicographic, complete, and capped correctly") {
    const std::vector<int> pool = {3, 5, 7, 9};
    auto all = cge::enumerate_subsets(pool, 2, 0);
    CHECK_FALSE(all.truncated);
    REQUIRE(all.subsets.size() == 6);
    CHECK(all.subsets[0] == (std::vector<int>{3, 5}));
    CHECK(all.subsets[1] == (std::vector<int>{3, 7}));
    CHECK(all.subsets[2] == (std::vector<int>{3, 9}));
    CHECK(all.subsets[3] == (std::vector<int>{5, 7}));
    CHECK(all.subsets[4] == (std::vector<int>{5, 9}));
    CHECK(all.subsets[5] == (std::vector<int>{7, 9}));

    auto capped = cge::enumerate_subsets(pool, 2, 4);
    CHECK(capped.truncated);
    REQUIRE(capped.subsets.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(capped.subsets[static_cast<std::size_t>(i)] == all.subsets[static_cast<std::size_t>(i)]);
    }
    auto exact_cap = cge::enumerate_subsets(pool, 2, 6);
    CHECK_FALSE(exact_cap.truncated);  // cap reached but nothing was left out
    CHECK(exact_cap.subsets.size() == 6);
    auto loose_cap = cge::enumerate_subsets(pool, 2, 7);
    CHECK_FALSE(loose_cap.truncated);

    CHECK(cge::enumerate_subsets(pool, 0, 0).subsets.size() == 1);
    CHECK(cge::enumerate_subsets(pool, 5, 0).subsets.empty());

    // counts match binomial coefficients on random pools
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(9));
        std::vector<int> p(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i)] = i * 2;
        for (int d = 0; d <= m; ++d) {
            CHECK(cge::enumerate_subsets(p, d, 0).subsets.size() ==
                  cge::binomial(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(d)));
        }
    }
}

TEST_CASE("GeometricGraph validation catches inconsistent sizes") {
    cge::GeometricGraph g;
    g.num_nodes = 3;
    g.space_dim = 2;
    g.positions.assign(6, 0.0);
    g.topology = Graph::complete(3);
    g.edge_attr_dim = 1;
    g.edge_attrs.assign(3, 0.0);
    CHECK_NOTHROW(g.validate());
    g.velocities.assign(5, 0.0);
    CHECK_THROWS_AS(g.validate(), cge::ConfigError);
    g.velocities.assign(6, 0.0);
    CHECK_NOTHROW(g.validate());
    g.num_scalars = 2;
    CHECK_THROWS_AS(g.validate(), cge::ConfigError);
    g.scalars.assign(6, 1.0);
    CHECK_NOTHROW(g.validate());
    g.edge_attrs.pop_back();
    CHECK_THROWS_AS(g.validate(), cge::ConfigError);
}

TEST_CASE("Hausdorff distance under the max norm") {
    using Pts = std::vector<std::vector<double>>;
    const Pts a = {{0.0, 0.0}, {1.0, 0.0}};
    const Pts b = {{0.0, 0.1}, {1.0, 0.0}, {1.0, 0.4}};
    CHECK(cge::hausdorff_inf(a, a) == 0.0);
    CHECK(cge::hausdorff_inf(a, b) == doctest::Approx(0.4));
    CHECK(cge::hausdorff_inf(b, a) == doctest::Approx(0.4));
    CHECK_THROWS_AS(cge::hausdorff_inf({}, a), cge::ConfigError);
}

TEST_CASE("lattice centers, snapping, and the bump's support") {
    CHECK(cge::lattice::center(1, 2) == doctest::Approx(0.25));
    CHECK(cge::lattice::center(2, 2) == doctest::Approx(0.75));
    CHECK(cge::lattice::center(1, 5) == doctest::Approx(0.1));

    // snapping picks the nearest cell center for interior points
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int K = 1 + static_cast<int>(rng.below(5));
        const double z = rng.uniform();
        const int i = cge::lattice::snap_index(z, K);
        REQUIRE(i >= 1);
        REQUIRE(i <= K);
        double best = 1e9;
        int best_i = 0;
        for (int j = 1; j <= K; ++j) {
            const double d = std::abs(z - cge::lattice::center(j, K));
            if (d < best) {
                best = d;
                best_i = j;
            }
        }
        CHECK(i == best_i);
    }
    // clamping outside [0, 1]
    CHECK(cge::lattice::snap_index(-0.3, 4) == 1);
    CHECK(cge::lattice::snap_index(1.7, 4) == 4);

    const int K = 3;
    const double r = 1.0 / (2.0 * K);
    CHECK(cge::lattice::bump(0.0, K) == doctest::Approx(1.0));
    CHECK(cge::lattice::bump(r, K) == 0.0);       // exactly zero at the boundary
    CHECK(cge::lattice::bump(r * 2, K) == 0.0);   // and beyond
    CHECK(cge::lattice::bump(r * 0.5, K) > 0.0);
    CHECK(cge::lattice::bump(r * 0.5, K) < 1.0);
}

TEST_CASE("a bump sum is positive exactly when the snapped cell belongs to the set") {
    Rng rng(47);
    for (int K = 2; K <= 5; ++K) {
        for (int d = 1; d <= 2; ++d) {
            const auto grid = cge::lattice::all_points(d, K);
            for (int rep = 0; rep < 4; ++rep) {
                // random subset of at most 4 lattice points
                std::vector<std::size_t> order(grid.size());
                for (std::size_t i = 0; i < grid.size(); ++i) order[i] = i;
                rng.shuffle(order);
                const std::size_t take = 1 + rng.below(std::min<std::uint64_t>(4, grid.size()));
                std::vector<std::vector<double>> chosen;
                std::set<std::vector<double>> chosen_set;
                for (std::size_t i = 0; i < take; ++i) {
                    chosen.push_back(grid[order[i]]);
                    chosen_set.insert(grid[order[i]]);
                }
                for (int probe = 0; probe < 100; ++probe) {
                    std::vector<double> z(static_cast<std::size_t>(d));
                    for (auto& v : z) v = rng.uniform();
                    std::vector<double> snapped(static_cast<std::size_t>(d));
                    for (int j = 0; j < d; ++j) {
                        snapped[static_cast<std::size_t>(j)] =
                            cge::lattice::center(cge::lattice::snap_index(z[static_cast<std::size_t>(j)], K), K);
                    }
                    const bool inside = chosen_set.count(snapped) > 0;
                    const double s = cge::lattice::sum_of_bumps(chosen, z, K);
                    CHECK((s > 0.0) == inside);
                }
            }
        }
    }
}

TEST_CASE("reading the bump sum back recovers the represented set exactly") {
    Rng rng(53);
    for (int K : {2, 3, 4}) {
        for (int d : {1, 2}) {
            const auto grid = cge::lattice::all_points(d, K);
            for (int rep = 0; rep < 25; ++rep) {
                std::vector<std::size_t> order(grid.size());
                for (std::size_t i = 0; i < grid.size(); ++i) order[i] = i;
                rng.shuffle(order);
                const std::size_t take = 1 + rng.below(grid.size());
                std::vector<std::vector<double>> chosen;
                for (std::size_t i = 0; i < take; ++i) chosen.push_back(grid[order[i]]);
                auto recovered = cge::lattice::recover_set(chosen, d, K);
                auto sorted_chosen = chosen;
                std::sort(sorted_chosen.begin(), sorted_chosen.end());
                std::sort(recovered.begin(), recovered.end());
                CHECK(recovered == sorted_chosen);
                CHECK(cge::hausdorff_inf(recovered, chosen) == 0.0);
            }
        }
    }
}
