#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "cge/errors.hpp"

namespace cge {

// A basis blade of Cl(R^n) is a bitmask: bit i set means generator e_{i+1}
// is a factor. Grade = popcount. The scalar blade is 0.
using Blade = std::uint32_t;

inline int blade_grade(Blade b) { return std::popcount(b); }

// Sign from reordering the concatenated factor lists of a and b into
// canonical ascending order, counting transpositions; repeated generators
// then contract with +1 (Euclidean metric).
int reorder_sign(Blade a, Blade b);

// Multiplication table of Cl(R^n) over basis blades. The product of blades
// a and b is sign(a,b) * blade(a XOR b); with a Euclidean metric the sign is
// always +-1 and no products vanish.
class CayleyTable {
public:
    static constexpr int kMaxDim = 8;

    explicit CayleyTable(int dim);

    // Cached immutable tables, one per dimension. Throws ConfigError unless
    // 1 <= dim <= 8.
    static const CayleyTable& shared(int dim);

    int dim() const { return dim_; }
    int blades() const { return 1 << dim_; }

    double sign(Blade a, Blade b) const { return static_cast<double>(sign_[(a << dim_) | b]); }
    Blade product_blade(Blade a, Blade b) const { return a ^ b; }
    int grade(Blade b) const { return grade_[b]; }

private:
    int dim_;
    std::vector<std::int8_t> sign_;   // (2^n)^2 entries
    std::vector<std::int8_t> grade_;  // 2^n entries
};

// Dense multivector: 2^n coefficients indexed by blade mask. Immutable-style
// value semantics; all operations allocate their result.
class Multivector {
public:
    Multivector() : dim_(0), c_(1, 0.0) {}
    explicit Multivector(int dim);
    Multivector(int dim, std::vector<double> coeffs);

    static Multivector scalar(int dim, double value);
    // grade-1 embedding of an n-vector
    static Multivector vector(int dim, std::span<const double> v);

    int dim() const { return dim_; }
    int blades() const { return 1 << dim_; }
    double operator[](Blade b) const { return c_[b]; }
    double& operator[](Blade b) { return c_[b]; }
    std::span<const double> coeffs() const { return c_; }
    std::span<double> coeffs() { return c_; }

    // coefficients of grade-1 blades, in generator order
    std::vector<double> vector_part() const;

private:
    int dim_;
    std::vector<double> c_;
};

Multivector operator+(const Multivector& a, const Multivector& b);
Multivector operator-(const Multivector& a, const Multivector& b);
Multivector operator*(double s, const Multivector& a);
Multivector operator*(const Multivector& a, const Multivector& b);  // geometric product

Multivector geometric_product(const Multivector& a, const Multivector& b);

// Zeroes every coefficient whose blade grade differs from k.
// Throws ConfigError if k is outside [0, n].
Multivector grade_project(const Multivector& x, int k);

// Grade involution: negates odd-grade coefficients.
Multivector main_involution(const Multivector& x);

// Even/odd split helpers (x = even + odd).
Multivector even_part(const Multivector& x);
Multivector odd_part(const Multivector& x);

// Extended quadratic form: sum of squares of all 2^n coefficients.
double extended_q(const Multivector& x);
// Restricted to coefficients of grade k.
double extended_q(const Multivector& x, int k);

double max_abs_diff(const Multivector& a, const Multivector& b);

}  // namespace cge
