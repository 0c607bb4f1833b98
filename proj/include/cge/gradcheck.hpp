#pragma once

#include <functional>
#include <vector>

#include "cge/rng.hpp"
#include "cge/tape.hpp"

namespace cge::ad {

// Builds a scalar loss on a fresh tape from differentiable leaves created out
// of the given flat input arrays. Must be deterministic in the inputs.
using LossBuilder = std::function<Value(Tape&, const std::vector<Value>&)>;

struct GradProbeReport {
    double max_rel = 0.0;   // worst relative error over all probed coordinates
    int checked = 0;        // number of coordinates probed
    int worst_input = -1;   // which input array held the worst coordinate
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Evaluates the loss once (no gradients kept).
double eval_loss(const std::vector<std::vector<double>>& inputs,
                 const std::vector<Shape>& shapes, const LossBuilder& build);

// Compares reverse-mode gradients against central finite differences at
// randomly probed coordinates. Relative error uses |analytic| + 1e-8 in the
// denominator; coordinates where both analytic and numeric gradients are
// below 1e-6 in magnitude count as agreeing (finite differences cannot
// resolve them). `probes_per_input` caps probes per input array; arrays at
// most that long are probed exhaustively.
GradProbeReport probe_gradients(const std::vector<std::vector<double>>& inputs,
                                const std::vector<Shape>& shapes, const LossBuilder& build,
                                Rng& rng, int probes_per_input = 50, double step = 1e-5);

}  // namespace cge::ad
