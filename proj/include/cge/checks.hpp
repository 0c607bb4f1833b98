#pragma once

#include <cstdint>
#include <string>

namespace cge::checks {

// Outcome of one property suite. `worst` is the largest error observed (a
// mismatch count for exact combinatorial checks); `detail` is a short
// human-readable note about scope or the worst case.
struct CheckReport {
    std::string kind;
    int trials = 0;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;

    // one machine-readable line, e.g.
    // "check=algebra trials=4000 worst=2.2e-16 tol=1e-12 status=PASS"
    std::string line() const;
};

// Geometric products of random multivectors for dims 1..max_dim against the
// independent tensor-reduction oracle; worst absolute coefficient error.
CheckReport check_algebra(int trials_per_dim, int max_dim, double tol, std::uint64_t seed);

// Random (model, graph, rotation/reflection, translation) trials at n = 3
// with node counts up to 8, message orders up to 3, and hops up to 2.
// model_kind cgegnn or egnn: predictions must transform with the input
// (vector heads) or stay fixed (scalar heads) within the tolerances.
// model_kind gnn: the suite passes when a clear violation IS found, since
// that architecture is the intentionally non-equivariant control.
CheckReport check_equivariance(const std::string& model_kind, int trials, double vector_tol,
                               double scalar_tol, std::uint64_t seed);

// Central finite differences (step 1e-5) against reverse-mode gradients for
// every layer family and every model end to end, `probes` coordinates each;
// worst relative error.
CheckReport check_gradients(int probes, double tol, std::uint64_t seed);

// Lattice expressivity mechanics on [0,1]^d with K cells per axis and random
// M-point sets: (1) the summed bump at a lattice center is positive exactly
// when some point snaps to it, checked at every lattice point; (2) recovering
// the positive set reproduces the snapped point set exactly. `worst` counts
// mismatches; exact checks, tolerance 0.
CheckReport check_universality(int K, int d, int M, int trials, std::uint64_t seed);

// BFS k-hop neighborhoods vs a Floyd-Warshall all-pairs oracle on random
// graphs (node counts up to 12, hops 1..3), plus subset enumeration counts vs
// binomial coefficients for pools up to 10 and orders up to 4.
CheckReport check_neighborhoods(int trials, std::uint64_t seed);

}  // namespace cge::checks
