#pragma once

#include <utility>
#include <vector>

#include "cge/algebra.hpp"

namespace cge {

// Reference implementation of the geometric product that never touches the
// Cayley table: blades are kept as explicit generator-index words which are
// reduced in the tensor algebra modulo v (x) v = q(v) by adjacent swaps
// (sign flip) and adjacent equal-pair contraction (factor +1, Euclidean).
// Deliberately slow and simple; exists to cross-check the table-driven path.

// Returns {sign, canonical blade mask} of the product of two blades.
std::pair<int, Blade> oracle_blade_product(Blade a, Blade b);

Multivector oracle_geometric_product(const Multivector& a, const Multivector& b);

}  // namespace cge
