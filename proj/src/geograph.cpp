#include "cge/geograph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "cge/errors.hpp"

namespace cge {

Graph Graph::complete(int m) {
    if (m < 1) throw ConfigError("Graph::complete: need at least one node");
    Graph g;
    g.num_nodes = m;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) g.edges.emplace_back(i, j);
    }
    return g;
}

std::vector<std::vector<int>> Graph::adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(num_nodes));
    std::set<std::pair<int, int>> seen;
    for (const auto& [i, j] : edges) {
        if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes) {
            throw ConfigError("Graph: edge endpoint out of range");
        }
        if (i >= j) throw ConfigError("Graph: edges must be stored as (i, j) with i < j");
        if (!seen.insert({i, j}).second) throw ConfigError("Graph: duplicate edge");
        adj[static_cast<std::size_t>(i)].push_back(j);
        adj[static_cast<std::size_t>(j)].push_back(i);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

std::vector<std::vector<int>> k_hop_neighborhoods(const Graph& g, int k) {
    if (k < 0) throw ConfigError("k_hop_neighborhoods: k must be non-negative");
    const auto adj = g.adjacency();
    std::vector<std::vector<int>> hoods(static_cast<std::size_t>(g.num_nodes));
    std::vector<int> dist(static_cast<std::size_t>(g.num_nodes));
    for (int src = 0; src < g.num_nodes; ++src) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[static_cast<std::size_t>(src)] = 0;
        std::deque<int> queue = {src};
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            if (dist[static_cast<std::size_t>(u)] == k) continue;
            for (int v : adj[static_cast<std::size_t>(u)]) {
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    queue.push_back(v);
                }
            }
        }
        auto& out = hoods[static_cast<std::size_t>(src)];
        for (int v = 0; v < g.num_nodes; ++v) {
            if (v != src && dist[static_cast<std::size_t>(v)] > 0) out.push_back(v);
        }
        // already ascending by construction of the scan
    }
    return hoods;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t factor = n - k + i;
        // result * factor / i is always integral at this point; guard overflow
        if (result > std::numeric_limits<std::uint64_t>::max() / factor) {
            throw ConfigError("binomial: value exceeds 64 bits");
        }
        result = result * factor / i;
    }
    return result;
}

SubsetList enumerate_subsets(const std::vector<int>& pool, int d, std::uint64_t max_subsets) {
    if (d < 0) throw ConfigError("enumerate_subsets: subset size must be non-negative");
    SubsetList out;
    const int m = static_cast<int>(pool.size());
    if (d == 0) {
        out.subsets.push_back({});
        return out;
    }
    if (d > m) return out;
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        if (max_subsets != 0 && out.subsets.size() == max_subsets) {
            out.truncated = true;
            return out;
        }
        std::vector<int> subset(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            subset[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        }
        out.subsets.push_back(std::move(subset));
        // advance to next combination in lexicographic order
        int pos = d - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - d + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (int i = pos + 1; i < d; ++i) {
            idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
        }
    }
    return out;
}

void GeometricGraph::validate() const {
    if (num_nodes < 1) throw ConfigError("GeometricGraph: need at least one node");
    if (space_dim < 1) throw ConfigError("GeometricGraph: space dimension must be positive");
    const std::size_t np = static_cast<std::size_t>(num_nodes) * space_dim;
    if (positions.size() != np) throw ConfigError("GeometricGraph: positions size mismatch");
    if (!velocities.empty() && velocities.size() != np) {
        throw ConfigError("GeometricGraph: velocities size mismatch");
    }
    if (scalars.size() != static_cast<std::size_t>(num_nodes) * num_scalars) {
        throw ConfigError("GeometricGraph: scalars size mismatch");
    }
    if (topology.num_nodes != num_nodes) {
        throw ConfigError("GeometricGraph: topology node count mismatch");
    }
    (void)topology.adjacency();  // validates the edge list
    if (edge_attrs.size() != topology.edges.size() * static_cast<std::size_t>(edge_attr_dim)) {
        throw ConfigError("GeometricGraph: edge attribute size mismatch");
    }
}

namespace {

double dist_inf(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

double hausdorff_inf(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw ConfigError("hausdorff_inf: empty point set");
    double worst = 0.0;
    const auto one_sided = [](const auto& from, const auto& to) {
        double w = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                if (p.size() != q.size()) throw ConfigError("hausdorff_inf: dimension mismatch");
                best = std::min(best, dist_inf(p, q));
            }
            w = std::max(w, best);
        }
        return w;
    };
    worst = std::max(one_sided(a, b), one_sided(b, a));
    return worst;
}

namespace lattice {

double center(int i, int K) {
    if (K < 1 || i < 1 || i > K) throw ConfigError("lattice::center: index outside [1, K]");
    return (2.0 * i - 1.0) / (2.0 * K);
}

int snap_index(double z, int K) {
    if (K < 1) throw ConfigError("lattice::snap_index: K must be positive");
    const int i = static_cast<int>(std::floor(z * K)) + 1;
    return std::clamp(i, 1, K);
}

double bump(double dist, int K) {
    if (K < 1) throw ConfigError("lattice::bump: K must be positive");
    const double r = 1.0 / (2.0 * K);
    const double t = std::max(0.0, r - dist);
    if (t == 0.0) return 0.0;  // exactly zero outside the open cell
    return (1.0 - std::exp(-t)) / (1.0 - std::exp(-r));
}

double sum_of_bumps(const std::vector<std::vector<double>>& centers, std::span<const double> z,
                    int K) {
    double s = 0.0;
    for (const auto& c : centers) {
        if (c.size() != z.size()) throw ConfigError("lattice::sum_of_bumps: dimension mismatch");
        s += bump(dist_inf(c, z), K);
    }
    return s;
}

std::vector<std::vector<double>> all_points(int d, int K) {
    if (d < 1) throw ConfigError("lattice::all_points: dimension must be positive");
    if (K < 1) throw ConfigError("lattice::all_points: K must be positive");
    std::vector<std::vector<double>> pts;
    std::vector<int> idx(static_cast<std::size_t>(d), 1);
    while (true) {
        std::vector<double> p(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) p[static_cast<std::size_t>(j)] = center(idx[static_cast<std::size_t>(j)], K);
        pts.push_back(std::move(p));
        int pos = d - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == K) {
            idx[static_cast<std::size_t>(pos)] = 1;
            --pos;
        }
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
    }
    return pts;
}

std::vector<std::vector<double>> recover_set(const std::vector<std::vector<double>>& centers,
                                             int d, int K) {
    std::vector<std::vector<double>> out;
    for (const auto& p : all_points(d, K)) {
        if (sum_of_bumps(centers, p, K) > 0.0) out.push_back(p);
    }
    return out;
}

}  // namespace lattice

}  // namespace cge
