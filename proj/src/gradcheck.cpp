#include "cge/gradcheck.hpp"

#include <cmath>
#include <numeric>

#include "cge/errors.hpp"

namespace cge::ad {

namespace {

Value build_on(Tape& tape, const std::vector<std::vector<double>>& inputs,
               const std::vector<Shape>& shapes, const LossBuilder& build) {
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        leaves.push_back(tape.leaf(shapes[i], inputs[i], true));
    }
    Value loss = build(tape, leaves);
    if (tape.shape(loss).size() != 1) {
        throw ConfigError("gradcheck: loss builder must return a scalar");
    }
    return loss;
}

}  // namespace

double eval_loss(const std::vector<std::vector<double>>& inputs,
                 const std::vector<Shape>& shapes, const LossBuilder& build) {
    Tape tape;
    Value loss = build_on(tape, inputs, shapes, build);
    return tape.value(loss)[0];
}

GradProbeReport probe_gradients(const std::vector<std::vector<double>>& inputs,
                                const std::vector<Shape>& shapes, const LossBuilder& build,
                                Rng& rng, int probes_per_input, double step) {
    if (inputs.size() != shapes.size()) {
        throw ConfigError("gradcheck: one shape per input required");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != shapes[i].size()) {
            throw ConfigError("gradcheck: input length does not match its shape");
        }
    }

    // Analytic gradients from one reverse sweep.
    std::vector<std::vector<double>> analytic(inputs.size());
    {
        Tape tape;
        std::vector<Value> leaves;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            leaves.push_back(tape.leaf(shapes[i], inputs[i], true));
        }
        Value loss = build(tape, leaves);
        if (tape.shape(loss).size() != 1) {
            throw ConfigError("gradcheck: loss builder must return a scalar");
        }
        tape.backward(loss);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto gspan = tape.grad(leaves[i]);
            analytic[i].assign(gspan.begin(), gspan.end());
        }
    }

    GradProbeReport report;
    std::vector<std::vector<double>> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::size_t len = inputs[i].size();
        if (len == 0) continue;
        std::vector<std::size_t> coords(len);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (len > static_cast<std::size_t>(probes_per_input)) {
            rng.shuffle(coords);
            coords.resize(static_cast<std::size_t>(probes_per_input));
        }
        for (std::size_t c : coords) {
            const double saved = work[i][c];
            work[i][c] = saved + step;
            const double lp = eval_loss(work, shapes, build);
            work[i][c] = saved - step;
            const double lm = eval_loss(work, shapes, build);
            work[i][c] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[i][c];
            double rel = 0.0;
            // below ~1e-6 the central difference is dominated by rounding of
            // the loss values themselves, not by the derivative being probed
            if (std::abs(a) >= 1e-6 || std::abs(numeric) >= 1e-6) {
                rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
            }
            ++report.checked;
            if (rel > report.max_rel) {
                report.max_rel = rel;
                report.worst_input = static_cast<int>(i);
                report.worst_coord = c;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace cge::ad
