#pragma once

// Reference message-passing models used as desk-scale comparisons:
//  - GnnModel: plain message passing over flattened node features with raw
//    positions included, so it is permutation-equivariant but intentionally
//    NOT rotation-equivariant (negative control).
//  - EgnnModel: messages carry squared pairwise distances, positions move
//    along difference vectors gated by learned scalars, and node features are
//    built from invariants only, so the whole map is E(n)-equivariant.

#include <span>
#include <vector>

#include "cge/geograph.hpp"
#include "cge/layers.hpp"
#include "cge/model.hpp"
#include "cge/rng.hpp"
#include "cge/tape.hpp"

namespace cge {

struct BaselineConfig {
    int space_dim = 3;
    int num_features = 8;  // node embedding width
    int num_layers = 2;
    int hidden = 0;           // MLP hidden width; 0 means num_features
    int vector_features = 0;  // 1 when graphs carry velocities
    int scalar_features = 0;  // per-node scalar attribute count
    int edge_attr_dim = 0;
    Head head = Head::Vector;
    bool velocity_gate = false;  // EGNN only; needs vector_features == 1

    int hidden_width() const { return hidden > 0 ? hidden : num_features; }
    void validate() const;  // throws ConfigError
};

// m_ij = msg([h_i, h_j, e_ij]) over directed graph edges,
// h_i <- upd([h_i, sum_j m_ij]); raw positions (and velocities/scalars) are
// flattened into h^0; heads: per-node affine decode, scalar head sum-pools.
class GnnModel final : public GraphModel {
public:
    explicit GnnModel(BaselineConfig cfg);

    void init(Rng& rng) override;
    nn::ParamStore& params() override { return store_; }
    const nn::ParamStore& params() const override { return store_; }
    const BaselineConfig& config() const { return cfg_; }

    ForwardResult forward(ad::Tape& t, const nn::Bound& b,
                          const std::vector<GeometricGraph>& batch,
                          std::span<const double> targets) const override;
    std::vector<double> extract(const ad::Tape& t, ad::Value prediction) const override;

private:
    BaselineConfig cfg_;
    nn::ParamStore store_;
    nn::DenseMLP embed_;                // single affine: raw features -> nf
    std::vector<nn::DenseMLP> msg_;     // per layer: [h_i, h_j, e_ij] -> nf
    std::vector<nn::DenseMLP> upd_;     // per layer: [h_i, agg] -> nf
    nn::DenseMLP dec_;                  // nf -> n (vector) or 1 (scalar)
};

// m_ij = msg([h_i, h_j, |x_i-x_j|^2, e_ij]) for every ordered pair,
// x_i <- x_i + (1/(M-1)) sum_{j!=i} (x_i-x_j) * gate(m_ij)
//        [+ vgate(h_i) * v_i when the velocity gate is on],
// h_i <- upd([h_i, sum_{j in N(i)} m_ij]); h^0 is built from invariants only
// (constant 1, |v_i|^2 when present, scalar attributes). The vector head
// returns the moved positions; the scalar head decodes h and sum-pools.
class EgnnModel final : public GraphModel {
public:
    explicit EgnnModel(BaselineConfig cfg);

    void init(Rng& rng) override;
    nn::ParamStore& params() override { return store_; }
    const nn::ParamStore& params() const override { return store_; }
    const BaselineConfig& config() const { return cfg_; }

    ForwardResult forward(ad::Tape& t, const nn::Bound& b,
                          const std::vector<GeometricGraph>& batch,
                          std::span<const double> targets) const override;
    std::vector<double> extract(const ad::Tape& t, ad::Value prediction) const override;

private:
    BaselineConfig cfg_;
    nn::ParamStore store_;
    nn::DenseMLP embed_;              // invariant features -> nf
    std::vector<nn::DenseMLP> msg_;   // per layer
    std::vector<nn::DenseMLP> xgate_; // per layer: m -> 1
    std::vector<nn::DenseMLP> vgate_; // per layer: h -> 1 (velocity gate)
    std::vector<nn::DenseMLP> upd_;   // per layer
    nn::DenseMLP dec_;                // scalar head decode (vector head uses x)
};

}  // namespace cge
