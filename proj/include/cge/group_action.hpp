#pragma once

#include <span>
#include <vector>

#include "cge/algebra.hpp"
#include "cge/rng.hpp"

namespace cge {

// An orthogonal matrix Q on R^n together with its lift to Cl(R^n): the unique
// algebra automorphism sending e_i to Q e_i. The lift is materialised once at
// construction as a 2^n x 2^n matrix over blade coordinates.
class OrthogonalMap {
public:
    // q is row-major n x n. Throws ConfigError if ||Q^T Q - I||_max > 1e-10.
    OrthogonalMap(int dim, std::vector<double> q);

    int dim() const { return dim_; }
    const std::vector<double>& matrix() const { return q_; }

    // y = Q v on plain n-vectors
    std::vector<double> apply_vector(std::span<const double> v) const;

    // lift applied to a full multivector
    Multivector apply(const Multivector& x) const;

    // action_[in_blade * 2^n + out_blade]: column of the lift for one blade
    const std::vector<double>& blade_action() const { return action_; }

private:
    int dim_;
    std::vector<double> q_;
    std::vector<double> action_;
};

inline Multivector apply_orthogonal(const OrthogonalMap& q, const Multivector& x) {
    return q.apply(x);
}

// A Clifford group element given as a nonzero scalar times a product of
// invertible grade-1 vectors. This explicit factorisation keeps inversion
// and parity trivial and sidesteps the open problem of deciding group
// membership of an arbitrary multivector.
struct VectorFactors {
    double scale = 1.0;
    std::vector<std::vector<double>> factors;
};

// Twisted conjugation rho(w)(x) = w x_even w^-1 + alpha(w) x_odd w^-1 where
// alpha is the main involution. Grade-preserving and multiplicative in w.
// Throws ConfigError if the scale is zero, a factor has q = 0, or sizes
// disagree with x's algebra.
Multivector twisted_conjugation(const VectorFactors& w, const Multivector& x);

// Householder reflection I - 2 v v^T / (v.v), row-major. Throws on v = 0.
std::vector<double> reflection_matrix(std::span<const double> v);

// Haar-ish random orthogonal matrix via Gram-Schmidt of a Gaussian matrix.
// want_det: 0 = leave the sign random, +1 / -1 = force that determinant.
std::vector<double> random_orthogonal(Rng& rng, int dim, int want_det = 0);

double matrix_determinant(std::span<const double> m, int dim);

}  // namespace cge
