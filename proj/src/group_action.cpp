#include "cge/group_action.hpp"

#include <cmath>

namespace cge {

OrthogonalMap::OrthogonalMap(int dim, std::vector<double> q) : dim_(dim), q_(std::move(q)) {
    if (dim < 1 || dim > CayleyTable::kMaxDim) {
        throw ConfigError("OrthogonalMap: dimension must be in [1, 8]");
    }
    if (q_.size() != static_cast<std::size_t>(dim) * dim) {
        throw ConfigError("OrthogonalMap: matrix size does not match dimension");
    }
    // orthogonality check: max |(Q^T Q - I)_{ij}| <= 1e-10
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            double s = 0.0;
            for (int r = 0; r < dim; ++r) s += q_[r * dim + i] * q_[r * dim + j];
            if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-10) {
                throw ConfigError("OrthogonalMap: matrix fails orthogonality check");
            }
        }
    }

    // Lift blade by blade: image(e_A) = image(e_low) * image(e_{A \ low}),
    // where low is the lowest generator in A (so no reordering sign appears).
    const int nb = 1 << dim_;
    action_.assign(static_cast<std::size_t>(nb) * nb, 0.0);
    std::vector<Multivector> image;
    image.reserve(nb);
    image.push_back(Multivector::scalar(dim_, 1.0));
    std::vector<Multivector> gen_image;
    for (int i = 0; i < dim_; ++i) {
        std::vector<double> col(dim_);
        for (int r = 0; r < dim_; ++r) col[r] = q_[r * dim_ + i];
        gen_image.push_back(Multivector::vector(dim_, col));
    }
    for (Blade a = 1; a < static_cast<Blade>(nb); ++a) {
        const int low = std::countr_zero(a);
        const Blade rest = a & (a - 1u) ? (a ^ (Blade(1) << low)) : 0u;
        image.push_back(gen_image[low] * image[rest]);
    }
    for (Blade a = 0; a < static_cast<Blade>(nb); ++a) {
        for (int out = 0; out < nb; ++out) {
            action_[static_cast<std::size_t>(a) * nb + out] = image[a][out];
        }
    }
}

std::vector<double> OrthogonalMap::apply_vector(std::span<const double> v) const {
    if (static_cast<int>(v.size()) != dim_) {
        throw ConfigError("OrthogonalMap::apply_vector: size mismatch");
    }
    std::vector<double> y(dim_, 0.0);
    for (int r = 0; r < dim_; ++r) {
        double s = 0.0;
        for (int c = 0; c < dim_; ++c) s += q_[r * dim_ + c] * v[c];
        y[r] = s;
    }
    return y;
}

Multivector OrthogonalMap::apply(const Multivector& x) const {
    if (x.dim() != dim_) {
        throw ConfigError("OrthogonalMap::apply: multivector lives in a different algebra");
    }
    const int nb = x.blades();
    Multivector y(dim_);
    for (Blade a = 0; a < static_cast<Blade>(nb); ++a) {
        const double c = x[a];
        if (c == 0.0) continue;
        const double* col = action_.data() + static_cast<std::size_t>(a) * nb;
        for (int out = 0; out < nb; ++out) y[out] += c * col[out];
    }
    return y;
}

Multivector twisted_conjugation(const VectorFactors& w, const Multivector& x) {
    const int dim = x.dim();
    if (w.scale == 0.0) {
        throw ConfigError("twisted_conjugation: scale factor is zero (not invertible)");
    }
    Multivector wmv = Multivector::scalar(dim, w.scale);
    Multivector winv = Multivector::scalar(dim, 1.0 / w.scale);
    for (const auto& f : w.factors) {
        if (static_cast<int>(f.size()) != dim) {
            throw ConfigError("twisted_conjugation: factor size does not match algebra dimension");
        }
        double q = 0.0;
        for (double c : f) q += c * c;
        if (q == 0.0) {
            throw ConfigError("twisted_conjugation: factor with q = 0 is not invertible");
        }
        const Multivector v = Multivector::vector(dim, f);
        wmv = wmv * v;
        // prepend the inverse factor: (v1...vk)^-1 = vk^-1 ... v1^-1, v^-1 = v/q(v)
        winv = (1.0 / q) * (v * winv);
    }
    const Multivector even = even_part(x);
    const Multivector odd = odd_part(x);
    return wmv * even * winv + main_involution(wmv) * odd * winv;
}

std::vector<double> reflection_matrix(std::span<const double> v) {
    const int n = static_cast<int>(v.size());
    double q = 0.0;
    for (double c : v) q += c * c;
    if (q == 0.0) throw ConfigError("reflection_matrix: zero vector");
    std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            m[i * n + j] = (i == j ? 1.0 : 0.0) - 2.0 * v[i] * v[j] / q;
        }
    }
    return m;
}

double matrix_determinant(std::span<const double> m, int dim) {
    // LU with partial pivoting; dim <= 8 so nothing fancy is needed
    std::vector<double> a(m.begin(), m.end());
    double det = 1.0;
    for (int c = 0; c < dim; ++c) {
        int piv = c;
        for (int r = c + 1; r < dim; ++r) {
            if (std::abs(a[r * dim + c]) > std::abs(a[piv * dim + c])) piv = r;
        }
        if (a[piv * dim + c] == 0.0) return 0.0;
        if (piv != c) {
            for (int k = 0; k < dim; ++k) std::swap(a[piv * dim + k], a[c * dim + k]);
            det = -det;
        }
        det *= a[c * dim + c];
        for (int r = c + 1; r < dim; ++r) {
            const double f = a[r * dim + c] / a[c * dim + c];
            for (int k = c; k < dim; ++k) a[r * dim + k] -= f * a[c * dim + k];
        }
    }
    return det;
}

std::vector<double> random_orthogonal(Rng& rng, int dim, int want_det) {
    while (true) {
        std::vector<double> m(static_cast<std::size_t>(dim) * dim);
        for (auto& x : m) x = rng.normal();
        // modified Gram-Schmidt over columns
        bool degenerate = false;
        for (int c = 0; c < dim && !degenerate; ++c) {
            for (int p = 0; p < c; ++p) {
                double dot = 0.0;
                for (int r = 0; r < dim; ++r) dot += m[r * dim + c] * m[r * dim + p];
                for (int r = 0; r < dim; ++r) m[r * dim + c] -= dot * m[r * dim + p];
            }
            double norm = 0.0;
            for (int r = 0; r < dim; ++r) norm += m[r * dim + c] * m[r * dim + c];
            norm = std::sqrt(norm);
            if (norm < 1e-8) {
                degenerate = true;
                break;
            }
            for (int r = 0; r < dim; ++r) m[r * dim + c] /= norm;
        }
        if (degenerate) continue;
        // one extra orthogonalisation sweep to push ||Q^T Q - I|| well below 1e-10
        for (int c = 0; c < dim; ++c) {
            for (int p = 0; p < c; ++p) {
                double dot = 0.0;
                for (int r = 0; r < dim; ++r) dot += m[r * dim + c] * m[r * dim + p];
                for (int r = 0; r < dim; ++r) m[r * dim + c] -= dot * m[r * dim + p];
            }
            double norm = 0.0;
            for (int r = 0; r < dim; ++r) norm += m[r * dim + c] * m[r * dim + c];
            norm = std::sqrt(norm);
            for (int r = 0; r < dim; ++r) m[r * dim + c] /= norm;
        }
        if (want_det != 0) {
            const double det = matrix_determinant(m, dim);
            if ((det > 0) != (want_det > 0)) {
                for (int r = 0; r < dim; ++r) m[r * dim + 0] = -m[r * dim + 0];
            }
        }
        return m;
    }
}

}  // namespace cge
