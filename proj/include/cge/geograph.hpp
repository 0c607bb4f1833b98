#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cge {

// Undirected simple graph on nodes 0..num_nodes-1. Edges are stored once as
// (i, j) with i < j.
struct Graph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;

    static Graph complete(int m);
    // sorted neighbor lists; throws ConfigError on bad or duplicate edges
    std::vector<std::vector<int>> adjacency() const;
};

// N^k(i) = { j != i : graph distance(i, j) <= k }, each list sorted ascending.
std::vector<std::vector<int>> k_hop_neighborhoods(const Graph& g, int k);

// exact binomial coefficient; throws ConfigError if it would overflow 64 bits
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// All d-element subsets of `pool`, in lexicographic order of pool positions.
// max_subsets = 0 means unlimited; otherwise enumeration stops at the cap and
// `truncated` reports whether anything was left out.
struct SubsetList {
    std::vector<std::vector<int>> subsets;
    bool truncated = false;
};
SubsetList enumerate_subsets(const std::vector<int>& pool, int d, std::uint64_t max_subsets);

// Node positions plus optional velocities, per-node scalars, topology, and
// per-edge attributes. The container every model and dataset agrees on.
struct GeometricGraph {
    int num_nodes = 0;
    int space_dim = 0;
    std::vector<double> positions;   // num_nodes * space_dim
    std::vector<double> velocities;  // empty or num_nodes * space_dim
    int num_scalars = 0;
    std::vector<double> scalars;     // num_nodes * num_scalars
    Graph topology;
    int edge_attr_dim = 0;
    std::vector<double> edge_attrs;  // edges.size() * edge_attr_dim

    void validate() const;  // throws ConfigError on inconsistent sizes
};

// Hausdorff distance between finite point sets under the max norm.
double hausdorff_inf(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b);

// Regular lattice of cell centers on [0, 1]^d with K cells per axis, plus the
// compactly supported bump that is positive exactly on one open cell. These
// back the expressivity checks: any subset of lattice points is represented
// by a sum of bumps and can be read back exactly.
namespace lattice {

double center(int i, int K);  // (2i - 1) / (2K) for i in [1, K]
int snap_index(double z, int K);
double bump(double dist_inf, int K);
double sum_of_bumps(const std::vector<std::vector<double>>& centers, std::span<const double> z,
                    int K);
std::vector<std::vector<double>> all_points(int d, int K);  // K^d centers, lexicographic
// evaluates the bump sum at every lattice point and keeps the positives
std::vector<std::vector<double>> recover_set(const std::vector<std::vector<double>>& centers,
                                             int d, int K);

}  // namespace lattice

}  // namespace cge
