#include "cge/algebra.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <mutex>

namespace cge {

int reorder_sign(Blade a, Blade b) {
    // Count the transpositions needed to interleave the factors of b into a.
    // Each generator of a that must hop over a lower-indexed generator of b
    // contributes one swap.
    int swaps = 0;
    a >>= 1;
    while (a != 0) {
        swaps += std::popcount(a & b);
        a >>= 1;
    }
    return (swaps & 1) ? -1 : 1;
}

CayleyTable::CayleyTable(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) {
        throw ConfigError("CayleyTable: dimension must be in [1, 8], got " + std::to_string(dim));
    }
    const int nb = blades();
    sign_.resize(static_cast<std::size_t>(nb) * nb);
    grade_.resize(nb);
    for (Blade b = 0; b < static_cast<Blade>(nb); ++b) {
        grade_[b] = static_cast<std::int8_t>(blade_grade(b));
    }
    for (Blade a = 0; a < static_cast<Blade>(nb); ++a) {
        for (Blade b = 0; b < static_cast<Blade>(nb); ++b) {
            sign_[(a << dim_) | b] = static_cast<std::int8_t>(reorder_sign(a, b));
        }
    }
}

const CayleyTable& CayleyTable::shared(int dim) {
    if (dim < 1 || dim > kMaxDim) {
        throw ConfigError("CayleyTable::shared: dimension must be in [1, 8], got " +
                          std::to_string(dim));
    }
    static std::array<std::unique_ptr<CayleyTable>, kMaxDim + 1> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    if (!cache[dim]) cache[dim] = std::make_unique<CayleyTable>(dim);
    return *cache[dim];
}

Multivector::Multivector(int dim) : dim_(dim) {
    if (dim < 1 || dim > CayleyTable::kMaxDim) {
        throw ConfigError("Multivector: dimension must be in [1, 8]");
    }
    c_.assign(static_cast<std::size_t>(1) << dim, 0.0);
}

Multivector::Multivector(int dim, std::vector<double> coeffs) : dim_(dim), c_(std::move(coeffs)) {
    if (dim < 1 || dim > CayleyTable::kMaxDim) {
        throw ConfigError("Multivector: dimension must be in [1, 8]");
    }
    if (c_.size() != (static_cast<std::size_t>(1) << dim)) {
        throw ConfigError("Multivector: coefficient count does not match 2^dim");
    }
}

Multivector Multivector::scalar(int dim, double value) {
    Multivector m(dim);
    m.c_[0] = value;
    return m;
}

Multivector Multivector::vector(int dim, std::span<const double> v) {
    if (static_cast<int>(v.size()) != dim) {
        throw ConfigError("Multivector::vector: component count does not match dimension");
    }
    Multivector m(dim);
    for (int i = 0; i < dim; ++i) m.c_[Blade(1) << i] = v[i];
    return m;
}

std::vector<double> Multivector::vector_part() const {
    std::vector<double> v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = c_[Blade(1) << i];
    return v;
}

static void check_same_dim(const Multivector& a, const Multivector& b, const char* op) {
    if (a.dim() != b.dim()) {
        throw ConfigError(std::string(op) + ": operands live in different algebras");
    }
}

Multivector operator+(const Multivector& a, const Multivector& b) {
    check_same_dim(a, b, "add");
    Multivector r(a.dim());
    for (int i = 0; i < a.blades(); ++i) r[i] = a[i] + b[i];
    return r;
}

Multivector operator-(const Multivector& a, const Multivector& b) {
    check_same_dim(a, b, "sub");
    Multivector r(a.dim());
    for (int i = 0; i < a.blades(); ++i) r[i] = a[i] - b[i];
    return r;
}

Multivector operator*(double s, const Multivector& a) {
    Multivector r(a.dim());
    for (int i = 0; i < a.blades(); ++i) r[i] = s * a[i];
    return r;
}

Multivector geometric_product(const Multivector& a, const Multivector& b) {
    check_same_dim(a, b, "geometric_product");
    const CayleyTable& t = CayleyTable::shared(a.dim());
    const int nb = a.blades();
    Multivector r(a.dim());
    for (Blade i = 0; i < static_cast<Blade>(nb); ++i) {
        const double ai = a[i];
        if (ai == 0.0) continue;
        for (Blade j = 0; j < static_cast<Blade>(nb); ++j) {
            const double bj = b[j];
            if (bj == 0.0) continue;
            r[i ^ j] += t.sign(i, j) * ai * bj;
        }
    }
    return r;
}

Multivector operator*(const Multivector& a, const Multivector& b) { return geometric_product(a, b); }

Multivector grade_project(const Multivector& x, int k) {
    if (k < 0 || k > x.dim()) {
        throw ConfigError("grade_project: grade " + std::to_string(k) + " outside [0, n]");
    }
    Multivector r(x.dim());
    for (Blade b = 0; b < static_cast<Blade>(x.blades()); ++b) {
        if (blade_grade(b) == k) r[b] = x[b];
    }
    return r;
}

Multivector main_involution(const Multivector& x) {
    Multivector r(x.dim());
    for (Blade b = 0; b < static_cast<Blade>(x.blades()); ++b) {
        r[b] = (blade_grade(b) & 1) ? -x[b] : x[b];
    }
    return r;
}

Multivector even_part(const Multivector& x) {
    Multivector r(x.dim());
    for (Blade b = 0; b < static_cast<Blade>(x.blades()); ++b) {
        if (!(blade_grade(b) & 1)) r[b] = x[b];
    }
    return r;
}

Multivector odd_part(const Multivector& x) {
    Multivector r(x.dim());
    for (Blade b = 0; b < static_cast<Blade>(x.blades()); ++b) {
        if (blade_grade(b) & 1) r[b] = x[b];
    }
    return r;
}

double extended_q(const Multivector& x) {
    double s = 0.0;
    for (int i = 0; i < x.blades(); ++i) s += x[i] * x[i];
    return s;
}

double extended_q(const Multivector& x, int k) {
    if (k < 0 || k > x.dim()) {
        throw ConfigError("extended_q: grade outside [0, n]");
    }
    double s = 0.0;
    for (Blade b = 0; b < static_cast<Blade>(x.blades()); ++b) {
        if (blade_grade(b) == k) s += x[b] * x[b];
    }
    return s;
}

double max_abs_diff(const Multivector& a, const Multivector& b) {
    check_same_dim(a, b, "max_abs_diff");
    double m = 0.0;
    for (int i = 0; i < a.blades(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace cge
