#include "cge/oracle.hpp"

namespace cge {

static std::vector<int> blade_word(Blade b) {
    std::vector<int> w;
    for (int i = 0; b != 0; ++i, b >>= 1) {
        if (b & 1) w.push_back(i);
    }
    return w;
}

std::pair<int, Blade> oracle_blade_product(Blade a, Blade b) {
    std::vector<int> word = blade_word(a);
    const std::vector<int> wb = blade_word(b);
    word.insert(word.end(), wb.begin(), wb.end());

    int sign = 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i + 1 < word.size(); ++i) {
            if (word[i] == word[i + 1]) {
                // e_k e_k = q(e_k) = 1
                word.erase(word.begin() + static_cast<std::ptrdiff_t>(i),
                           word.begin() + static_cast<std::ptrdiff_t>(i) + 2);
                changed = true;
                break;
            }
            if (word[i] > word[i + 1]) {
                std::swap(word[i], word[i + 1]);
                sign = -sign;
                changed = true;
                break;
            }
        }
    }

    Blade mask = 0;
    for (int g : word) mask |= Blade(1) << g;
    return {sign, mask};
}

Multivector oracle_geometric_product(const Multivector& a, const Multivector& b) {
    if (a.dim() != b.dim()) {
        throw ConfigError("oracle_geometric_product: operands live in different algebras");
    }
    Multivector r(a.dim());
    const int nb = a.blades();
    for (Blade i = 0; i < static_cast<Blade>(nb); ++i) {
        for (Blade j = 0; j < static_cast<Blade>(nb); ++j) {
            const double c = a[i] * b[j];
            if (c == 0.0) continue;
            auto [sign, mask] = oracle_blade_product(i, j);
            r[mask] += sign * c;
        }
    }
    return r;
}

}  // namespace cge
