#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cge/geograph.hpp"
#include "cge/layers.hpp"
#include "cge/rng.hpp"
#include "cge/tape.hpp"

namespace cge {

enum class Head { Vector, Scalar };

// Configuration of the equivariant graph network: Cl(R^n) features, L
// convolution layers, and messages over d-element subsets of the k-hop
// neighborhood for every order d in `orders`.
struct ModelConfig {
    int space_dim = 3;              // n
    int num_features = 8;           // multivector channels per node
    int num_layers = 2;             // L
    std::vector<int> orders = {1};  // strictly increasing, all >= 1
    int k_hops = 1;
    int vector_features = 0;        // grade-1 input channels besides positions (0 or 1)
    int scalar_features = 0;        // grade-0 input channels
    int edge_attr_dim = 0;          // per-edge reals fed to the message nets
    Head head = Head::Vector;
    int hidden = 0;                 // message/update net width; 0 -> num_features
    int mlp_depth = 2;
    std::uint64_t max_subsets_per_node = 0;  // 0 = unlimited

    int max_order() const { return orders.empty() ? 0 : orders.back(); }
    int hidden_channels() const { return hidden > 0 ? hidden : num_features; }
    void validate() const;  // throws ConfigError
};

// Constant data for one forward pass over a batch of graphs: embedded input
// channels, gather/segment index lists for every message order, and the
// original positions for the residual head. Nodes of all graphs are stacked.
struct OrderPlan {
    int order = 0;
    int num_subsets = 0;             // across the whole batch; 0 -> zero messages
    std::vector<int> member_rows;    // num_subsets * order node rows
    std::vector<int> subset_seg;     // num_subsets * order, non-decreasing
    std::vector<int> host_rows;      // num_subsets
    std::vector<int> host_seg;       // num_subsets, non-decreasing node rows
    std::vector<double> edge_attrs;  // num_subsets * edge_attr_dim
};

struct BatchPlan {
    int total_nodes = 0;
    int num_graphs = 0;
    std::vector<int> node_graph;       // node row -> graph index, non-decreasing
    int in_channels = 0;
    std::vector<double> embed_data;    // total_nodes * in_channels * 2^n
    std::vector<double> base_positions;  // total_nodes * n, un-centered
    std::vector<OrderPlan> orders;     // aligned with config.orders
    bool truncated = false;            // any subset list hit max_subsets_per_node
};

// Positions are centered per graph with x_i - mean = (1/M) sum_j (x_i - x_j),
// summed canonically, so translation by an exactly representable offset and
// node relabeling leave the plan's embedded data bitwise unchanged.
BatchPlan build_batch_plan(const ModelConfig& cfg, const std::vector<GeometricGraph>& batch);

struct ForwardResult {
    ad::Value prediction;
    ad::Value loss;  // mean squared error; set when targets given
    bool has_loss = false;
};

// common surface shared by the equivariant model and the baselines, so the
// trainer and the CLI can drive any of them through one handle
class GraphModel {
public:
    virtual ~GraphModel() = default;
    virtual void init(Rng& rng) = 0;
    virtual nn::ParamStore& params() = 0;
    virtual const nn::ParamStore& params() const = 0;
    // Vector head: targets are final positions (total_nodes * n). Scalar
    // head: one target per graph. Empty targets skip the loss.
    virtual ForwardResult forward(ad::Tape& t, const nn::Bound& b,
                                  const std::vector<GeometricGraph>& batch,
                                  std::span<const double> targets) const = 0;
    // plain numbers from the prediction: node positions (vector head) or one
    // scalar per graph (scalar head)
    virtual std::vector<double> extract(const ad::Tape& t, ad::Value prediction) const = 0;
};

class CgeGnn final : public GraphModel {
public:
    explicit CgeGnn(ModelConfig cfg);

    void init(Rng& rng) override;
    nn::ParamStore& params() override { return store_; }
    const nn::ParamStore& params() const override { return store_; }
    const ModelConfig& config() const { return cfg_; }

    using Result = ForwardResult;

    Result forward(ad::Tape& t, const nn::Bound& b, const BatchPlan& plan,
                   std::span<const double> targets) const;
    Result forward(ad::Tape& t, const nn::Bound& b, const std::vector<GeometricGraph>& batch,
                   std::span<const double> targets) const override;

    std::vector<double> extract(const ad::Tape& t, ad::Value prediction) const override;

    // submodule access for independent reference implementations in tests
    const nn::GradeLinear& embed_net() const { return embed_; }
    const std::vector<std::vector<nn::MvMLP>>& message_nets() const { return phi_m_; }
    const std::vector<nn::MvMLP>& update_nets() const { return phi_h_; }
    const nn::GradeLinear& head_net() const { return head_; }

private:
    ModelConfig cfg_;
    nn::ParamStore store_;
    nn::GradeLinear embed_;
    std::vector<std::vector<nn::MvMLP>> phi_m_;  // [layer][order index]
    std::vector<nn::MvMLP> phi_h_;               // [layer]
    nn::GradeLinear head_;
};

}  // namespace cge
