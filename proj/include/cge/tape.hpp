#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cge/algebra.hpp"
#include "cge/errors.hpp"

namespace cge::ad {

// Batched multivector tensor: batch x channels x 2^dim float64 coefficients,
// row-major with blades innermost. dim = 0 degenerates to a plain real
// matrix, which is how non-geometric (baseline) networks ride the same tape.
struct Shape {
    int batch = 1;
    int channels = 1;
    int dim = 0;
    int blades() const { return 1 << dim; }
    std::size_t size() const {
        return static_cast<std::size_t>(batch) * channels * blades();
    }
    bool operator==(const Shape&) const = default;
};

class Tape;

// Handle to a tape node. Mixing handles from different tapes is an error.
struct Value {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

enum class Nonlin { Relu, Sigmoid };

// Order-insensitive sum: accumulates in ascending value order so the result
// depends only on the multiset of summands, not on their labelling.
double canonical_sum(std::span<const double> xs);

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- node creation ----
    Value leaf(const Shape& s, std::span<const double> data, bool requires_grad);
    Value constant(const Shape& s, std::span<const double> data);
    Value zeros(const Shape& s);
    // flat parameter vector as a {1, len, dim=0} leaf with gradients
    Value param(std::span<const double> data);

    // ---- elementwise / structural ----
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value neg(Value a);
    Value scale(Value a, double s);
    Value concat_channels(const std::vector<Value>& xs);
    // y row i = x row rows[i]; rows may repeat
    Value gather_rows(Value x, std::vector<int> rows);
    // seg maps each input row to its output row; must be non-decreasing so
    // each segment is a contiguous row range. Empty segments sum to zero.
    // Row sums are canonical (order-insensitive) per coefficient.
    Value segment_sum(Value x, std::vector<int> seg, int num_segments);

    // ---- geometric ops ----
    // channelwise geometric product of equally shaped tensors, dim >= 1
    Value geometric_product(Value a, Value b);
    // y[b,co,k] = sum_ci w[co,ci,grade(k)] x[b,ci,k]; w flat (q * p * (n+1))
    Value linear_mix(Value x, Value w, int channels_out);
    // weighted geometric product of channel pairs with grade-triple weights.
    // fully_connected: w flat (q * p * (n+1)^3), output channel co sums over
    // input channel pairs; otherwise q = p and w is flat (p * (n+1)^3) with
    // channel c paired only with itself.
    Value geometric_mix(Value x, Value z, Value w, int channels_out, bool fully_connected);
    // y[b,c,k] = w[c, grade(k)] * x[b,c,k]; w flat (C * (n+1))
    Value grade_scale(Value x, Value w);
    // keep grade m, zero the rest
    Value grade_mask(Value x, int m);
    // per (b,c,m): y = x / (sigmoid(phi[c,m]) * (q_m(x) - 1) + 1)
    Value normalize_grades(Value x, Value phi);
    // scalar blade through relu, each grade-m slice gated by sigmoid(q_m)
    Value nonlinear_gate(Value x);
    // elementwise relu / sigmoid over every stored coefficient
    Value scalar_nonlin(Value x, Nonlin kind);

    // ---- dense (dim = 0) ops ----
    // y[b,co] = sum_ci w[co,ci] x[b,ci] + bias[co]; x {B,p,0}
    Value dense_affine(Value x, Value w, Value bias, int channels_out);
    // per batch row: sum of squares over all channels/blades -> {B,1,0}
    Value rowwise_sumsq(Value x);
    // y[b,c,k] = x[b,c,k] * s[b]; s must be {B,1,0}
    Value mul_broadcast(Value x, Value s);

    // ---- reductions to a scalar node {1,1,0} ----
    // sum of squares of all grade-m coefficients
    Value sumsq_grade(Value x, int m);
    // sum_i weights[i] * x_i with constant weights (no gradient to weights)
    Value weighted_sum(Value x, std::vector<double> weights);

    // ---- access ----
    const Shape& shape(Value v) const;
    std::span<const double> value(Value v) const;
    // valid after backward(); empty span for nodes without gradient
    std::span<const double> grad(Value v) const;

    // Reverse sweep from a scalar node. Clears previous gradients first, so
    // repeated calls give identical results.
    void backward(Value loss);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        int op;
        Shape shape;
        std::vector<int> in;
        std::vector<double> val;
        std::vector<double> grad;
        std::vector<int> idx;      // gather rows / segment ids
        std::vector<double> aux;   // constant weights
        int i0 = 0;                // grade / kind / channels_out / num_segments
        int i1 = 0;                // flags
        bool rg = false;
    };

    std::vector<Node> nodes_;

    int push(Node n);
    Value check(Value v, const char* op) const;
    const Node& node(Value v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    Node& node(Value v) { return nodes_[static_cast<std::size_t>(v.id)]; }

    void forward_node(Node& n);
    void backward_node(int id);
};

}  // namespace cge::ad
