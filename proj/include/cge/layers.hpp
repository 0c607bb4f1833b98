#pragma once

#include <span>
#include <string>
#include <vector>

#include "cge/rng.hpp"
#include "cge/tape.hpp"

namespace cge::nn {

using ad::Shape;
using ad::Tape;
using ad::Value;

// ---------------------------------------------------------------------------
// flat parameter storage
// ---------------------------------------------------------------------------

// One named contiguous slice of the flat parameter vector.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Owns every trainable parameter as one flat vector of doubles. Blocks are
// appended in registration order, which fixes the serialization layout and
// the optimizer's update order.
class ParamStore {
public:
    int add(std::string name, std::size_t size);

    int count() const { return static_cast<int>(blocks_.size()); }
    const ParamBlock& block(int id) const { return blocks_[static_cast<std::size_t>(id)]; }
    std::size_t total() const { return values_.size(); }

    std::span<double> values(int id);
    std::span<const double> values(int id) const;
    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }

    void fill(int id, double v);
    void init_uniform(Rng& rng, int id, double bound);  // U(-bound, bound)

private:
    std::vector<ParamBlock> blocks_;
    std::vector<double> values_;
};

// Per-tape leaves for every block of a store, created eagerly so that each
// forward pass sees a consistent snapshot and gradients can be collected back
// into flat layout after backward().
class Bound {
public:
    Bound(Tape& tape, const ParamStore& store);
    Value operator[](int id) const { return leaves_[static_cast<std::size_t>(id)]; }
    // flat gradient vector aligned with store.flat(); zeros for untouched blocks
    std::vector<double> collect_grads(const Tape& tape) const;

private:
    const ParamStore* store_;
    std::vector<Value> leaves_;
};

// ---------------------------------------------------------------------------
// multivector layers (all grade-wise, hence commuting with the lifted
// orthogonal action by construction)
// ---------------------------------------------------------------------------

// y[b,co,k] = sum_ci w[co,ci,grade(k)] x[b,ci,k]
struct GradeLinear {
    int dim = 0, channels_in = 0, channels_out = 0;
    int w = -1;

    GradeLinear() = default;
    GradeLinear(ParamStore& ps, const std::string& name, int dim, int p, int q);
    void init(ParamStore& ps, Rng& rng) const;  // U(+-1/sqrt(p))
    Value forward(Tape& t, const Bound& b, Value x) const;
};

// z = pre_linear(x) (square), then the weighted geometric product
// y[b,co,g] = sum_ci sum_{(a,b): a^b=g} w[co,ci,|a|,|b|,|g|] sign(a,b) x[b,ci,a] z[b,ci,b].
// Weight sharing over blades of equal grade triple is what makes the layer
// commute with the lifted action. fully_connected=false ties co=ci (requires
// equal widths).
struct GeometricLayer {
    int dim = 0, channels_in = 0, channels_out = 0;
    bool fully_connected = true;
    int w_pre = -1, w_mix = -1;

    GeometricLayer() = default;
    GeometricLayer(ParamStore& ps, const std::string& name, int dim, int p, int q, bool fc);
    void init(ParamStore& ps, Rng& rng) const;
    Value forward(Tape& t, const Bound& b, Value x) const;
};

// x^(m) / (sigmoid(phi[c,m]) (q(x^(m)) - 1) + 1), denominator always > 0
struct GradeNorm {
    int dim = 0, channels = 0;
    int phi = -1;

    GradeNorm() = default;
    GradeNorm(ParamStore& ps, const std::string& name, int dim, int c);
    void init(ParamStore& ps) const;  // phi = 0
    Value forward(Tape& t, const Bound& b, Value x) const;
};

// Standard multivector block: [linear -> geometric product -> norm -> gate]
// repeated `depth` times, then a final linear to the output width.
struct MvMLP {
    int dim = 0, channels_in = 0, hidden = 0, channels_out = 0, depth = 0;
    std::vector<GradeLinear> linears;   // depth + 1
    std::vector<GeometricLayer> geoms;  // depth
    std::vector<GradeNorm> norms;       // depth

    MvMLP() = default;
    MvMLP(ParamStore& ps, const std::string& name, int dim, int p_in, int hidden, int p_out,
          int depth = 2);
    void init(ParamStore& ps, Rng& rng) const;
    Value forward(Tape& t, const Bound& b, Value x) const;
};

// ---------------------------------------------------------------------------
// plain dense layers over dim-0 tensors (for scalar heads and baselines)
// ---------------------------------------------------------------------------

enum class FinalAct { None, Relu, Sigmoid };

// sizes = {in, h1, ..., out}; ReLU between layers, optional final activation
struct DenseMLP {
    std::vector<int> sizes;
    std::vector<int> ws, bs;
    FinalAct final_act = FinalAct::None;

    DenseMLP() = default;
    DenseMLP(ParamStore& ps, const std::string& name, std::vector<int> sizes,
             FinalAct final_act = FinalAct::None);
    void init(ParamStore& ps, Rng& rng) const;  // W, b ~ U(+-1/sqrt(fan_in))
    Value forward(Tape& t, const Bound& b, Value x) const;
};

}  // namespace cge::nn
