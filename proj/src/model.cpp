#include "cge/model.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "cge/errors.hpp"

namespace cge {

void ModelConfig::validate() const {
    if (space_dim < 1 || space_dim > 8) throw ConfigError("ModelConfig: space_dim outside [1, 8]");
    if (num_features < 1) throw ConfigError("ModelConfig: num_features must be >= 1");
    if (num_layers < 1) throw ConfigError("ModelConfig: num_layers must be >= 1");
    if (k_hops < 1) throw ConfigError("ModelConfig: k_hops must be >= 1");
    if (orders.empty()) throw ConfigError("ModelConfig: at least one message order required");
    for (std::size_t i = 0; i < orders.size(); ++i) {
        if (orders[i] < 1) throw ConfigError("ModelConfig: orders must be >= 1");
        if (i > 0 && orders[i] <= orders[i - 1]) {
            throw ConfigError("ModelConfig: orders must be strictly increasing");
        }
    }
    if (vector_features < 0 || vector_features > 1) {
        throw ConfigError("ModelConfig: vector_features must be 0 or 1");
    }
    if (scalar_features < 0) throw ConfigError("ModelConfig: scalar_features must be >= 0");
    if (edge_attr_dim < 0) throw ConfigError("ModelConfig: edge_attr_dim must be >= 0");
    if (hidden < 0) throw ConfigError("ModelConfig: hidden must be >= 0");
    if (mlp_depth < 1) throw ConfigError("ModelConfig: mlp_depth must be >= 1");
}

// ---------------------------------------------------------------------------
// batch plan
// ---------------------------------------------------------------------------

BatchPlan build_batch_plan(const ModelConfig& cfg, const std::vector<GeometricGraph>& batch) {
    cfg.validate();
    if (batch.empty()) throw ConfigError("build_batch_plan: empty batch");
    const int n = cfg.space_dim;
    const int nb = 1 << n;
    const int in_ch = 1 + cfg.vector_features + cfg.scalar_features;

    BatchPlan plan;
    plan.num_graphs = static_cast<int>(batch.size());
    plan.in_channels = in_ch;
    plan.orders.resize(cfg.orders.size());
    for (std::size_t oi = 0; oi < cfg.orders.size(); ++oi) {
        plan.orders[oi].order = cfg.orders[oi];
    }

    for (const GeometricGraph& g : batch) {
        g.validate();
        if (g.space_dim != n) throw ConfigError("build_batch_plan: space dimension mismatch");
        const bool has_vel = !g.velocities.empty();
        if ((cfg.vector_features == 1) != has_vel) {
            throw ConfigError("build_batch_plan: vector feature count does not match data");
        }
        if (g.num_scalars != cfg.scalar_features) {
            throw ConfigError("build_batch_plan: scalar feature count does not match data");
        }
        if (g.edge_attr_dim != cfg.edge_attr_dim) {
            throw ConfigError("build_batch_plan: edge attribute width does not match config");
        }
        plan.total_nodes += g.num_nodes;
    }

    plan.node_graph.reserve(static_cast<std::size_t>(plan.total_nodes));
    plan.embed_data.assign(
        static_cast<std::size_t>(plan.total_nodes) * in_ch * nb, 0.0);
    plan.base_positions.assign(static_cast<std::size_t>(plan.total_nodes) * n, 0.0);

    int base = 0;
    std::vector<double> diffs;
    for (std::size_t gi = 0; gi < batch.size(); ++gi) {
        const GeometricGraph& g = batch[gi];
        const int m = g.num_nodes;
        for (int i = 0; i < m; ++i) plan.node_graph.push_back(static_cast<int>(gi));

        // centered positions: x_i - mean = (1/M) sum_j (x_i - x_j), summed
        // canonically so relabeling and exact translations cannot perturb bits
        diffs.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            const int row = base + i;
            for (int c = 0; c < n; ++c) {
                const double xi = g.positions[static_cast<std::size_t>(i) * n + c];
                plan.base_positions[static_cast<std::size_t>(row) * n + c] = xi;
                for (int j = 0; j < m; ++j) {
                    diffs[static_cast<std::size_t>(j)] =
                        xi - g.positions[static_cast<std::size_t>(j) * n + c];
                }
                const double centered = ad::canonical_sum(diffs) / static_cast<double>(m);
                // channel 0, grade-1 blade e_{c+1} has index 1 << c
                plan.embed_data[(static_cast<std::size_t>(row) * in_ch + 0) * nb + (1 << c)] =
                    centered;
            }
            int ch = 1;
            if (cfg.vector_features == 1) {
                for (int c = 0; c < n; ++c) {
                    plan.embed_data[(static_cast<std::size_t>(row) * in_ch + ch) * nb + (1 << c)] =
                        g.velocities[static_cast<std::size_t>(i) * n + c];
                }
                ++ch;
            }
            for (int s = 0; s < cfg.scalar_features; ++s, ++ch) {
                plan.embed_data[(static_cast<std::size_t>(row) * in_ch + ch) * nb + 0] =
                    g.scalars[static_cast<std::size_t>(i) * cfg.scalar_features + s];
            }
        }

        // message plans
        const auto hoods = k_hop_neighborhoods(g.topology, cfg.k_hops);
        std::map<std::pair<int, int>, std::size_t> edge_row;
        if (cfg.edge_attr_dim > 0) {
            for (std::size_t e = 0; e < g.topology.edges.size(); ++e) {
                edge_row[g.topology.edges[e]] = e;
            }
        }
        std::vector<double> attr_terms;
        for (std::size_t oi = 0; oi < cfg.orders.size(); ++oi) {
            const int d = cfg.orders[oi];
            OrderPlan& op = plan.orders[oi];
            for (int i = 0; i < m; ++i) {
                auto subsets =
                    enumerate_subsets(hoods[static_cast<std::size_t>(i)], d,
                                      cfg.max_subsets_per_node);
                plan.truncated = plan.truncated || subsets.truncated;
                for (const auto& A : subsets.subsets) {
                    const int sid = op.num_subsets++;
                    op.host_rows.push_back(base + i);
                    op.host_seg.push_back(base + i);
                    for (int j : A) {
                        op.member_rows.push_back(base + j);
                        op.subset_seg.push_back(sid);
                    }
                    if (cfg.edge_attr_dim > 0) {
                        // mean of the host-to-member edge attributes when all
                        // of those edges exist, otherwise zeros
                        bool all_edges = true;
                        for (int j : A) {
                            const auto key = std::minmax(i, j);
                            if (edge_row.find({key.first, key.second}) == edge_row.end()) {
                                all_edges = false;
                                break;
                            }
                        }
                        for (int c = 0; c < cfg.edge_attr_dim; ++c) {
                            double mean = 0.0;
                            if (all_edges) {
                                attr_terms.clear();
                                for (int j : A) {
                                    const auto key = std::minmax(i, j);
                                    const std::size_t e = edge_row[{key.first, key.second}];
                                    attr_terms.push_back(
                                        g.edge_attrs[e * cfg.edge_attr_dim + c]);
                                }
                                mean = ad::canonical_sum(attr_terms) /
                                       static_cast<double>(A.size());
                            }
                            op.edge_attrs.push_back(mean);
                        }
                    }
                }
            }
        }
        base += m;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

CgeGnn::CgeGnn(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int n = cfg_.space_dim;
    const int nf = cfg_.num_features;
    const int hidden = cfg_.hidden_channels();
    const int in_ch = 1 + cfg_.vector_features + cfg_.scalar_features;
    const int msg_in = 2 * nf + cfg_.edge_attr_dim;
    const int upd_in = (1 + cfg_.max_order()) * nf;

    embed_ = nn::GradeLinear(store_, "embed", n, in_ch, nf);
    phi_m_.resize(static_cast<std::size_t>(cfg_.num_layers));
    phi_h_.reserve(static_cast<std::size_t>(cfg_.num_layers));
    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string stem = "layer" + std::to_string(l);
        for (int d : cfg_.orders) {
            phi_m_[static_cast<std::size_t>(l)].emplace_back(
                store_, stem + ".msg" + std::to_string(d), n, msg_in, hidden, nf,
                cfg_.mlp_depth);
        }
        phi_h_.emplace_back(store_, stem + ".update", n, upd_in, hidden, nf, cfg_.mlp_depth);
    }
    head_ = nn::GradeLinear(store_, "head", n, nf, 1);
}

void CgeGnn::init(Rng& rng) {
    embed_.init(store_, rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        for (const auto& net : phi_m_[static_cast<std::size_t>(l)]) net.init(store_, rng);
        phi_h_[static_cast<std::size_t>(l)].init(store_, rng);
    }
    head_.init(store_, rng);
}

CgeGnn::Result CgeGnn::forward(ad::Tape& t, const nn::Bound& b,
                               const std::vector<GeometricGraph>& batch,
                               std::span<const double> targets) const {
    return forward(t, b, build_batch_plan(cfg_, batch), targets);
}

CgeGnn::Result CgeGnn::forward(ad::Tape& t, const nn::Bound& b, const BatchPlan& plan,
                               std::span<const double> targets) const {
    const int n = cfg_.space_dim;
    const int nb = 1 << n;
    const int nf = cfg_.num_features;
    const int rows = plan.total_nodes;
    if (static_cast<int>(plan.orders.size()) != static_cast<int>(cfg_.orders.size())) {
        throw ConfigError("forward: plan was built for a different order set");
    }

    ad::Value h = embed_.forward(
        t, b, t.constant(ad::Shape{rows, plan.in_channels, n}, plan.embed_data));

    for (int l = 0; l < cfg_.num_layers; ++l) {
        std::vector<ad::Value> slots;
        slots.push_back(h);
        std::size_t oi = 0;
        for (int d = 1; d <= cfg_.max_order(); ++d) {
            const bool present =
                oi < cfg_.orders.size() && cfg_.orders[oi] == d;
            if (!present) {
                slots.push_back(t.zeros(ad::Shape{rows, nf, n}));
                continue;
            }
            const OrderPlan& op = plan.orders[oi];
            ++oi;
            if (op.num_subsets == 0) {
                slots.push_back(t.zeros(ad::Shape{rows, nf, n}));
                continue;
            }
            ad::Value members = t.gather_rows(h, op.member_rows);
            ad::Value sums = t.segment_sum(members, op.subset_seg, op.num_subsets);
            ad::Value host = t.gather_rows(h, op.host_rows);
            std::vector<ad::Value> parts = {host, sums};
            if (cfg_.edge_attr_dim > 0) {
                std::vector<double> attr_mv(
                    static_cast<std::size_t>(op.num_subsets) * cfg_.edge_attr_dim * nb, 0.0);
                for (int s = 0; s < op.num_subsets; ++s) {
                    for (int c = 0; c < cfg_.edge_attr_dim; ++c) {
                        attr_mv[(static_cast<std::size_t>(s) * cfg_.edge_attr_dim + c) * nb] =
                            op.edge_attrs[static_cast<std::size_t>(s) * cfg_.edge_attr_dim + c];
                    }
                }
                parts.push_back(
                    t.constant(ad::Shape{op.num_subsets, cfg_.edge_attr_dim, n}, attr_mv));
            }
            ad::Value msg_in = t.concat_channels(parts);
            ad::Value msg =
                phi_m_[static_cast<std::size_t>(l)][oi - 1].forward(t, b, msg_in);
            slots.push_back(t.segment_sum(msg, op.host_seg, rows));
        }
        h = phi_h_[static_cast<std::size_t>(l)].forward(t, b, t.concat_channels(slots));
    }

    Result result;
    if (cfg_.head == Head::Vector) {
        ad::Value delta = t.grade_mask(head_.forward(t, b, h), 1);
        std::vector<double> base_mv(static_cast<std::size_t>(rows) * nb, 0.0);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < n; ++c) {
                base_mv[static_cast<std::size_t>(r) * nb + (1 << c)] =
                    plan.base_positions[static_cast<std::size_t>(r) * n + c];
            }
        }
        result.prediction = t.add(delta, t.constant(ad::Shape{rows, 1, n}, base_mv));
        if (!targets.empty()) {
            if (targets.size() != static_cast<std::size_t>(rows) * n) {
                throw ConfigError("forward: vector targets must hold node count * n values");
            }
            std::vector<double> target_mv(static_cast<std::size_t>(rows) * nb, 0.0);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < n; ++c) {
                    target_mv[static_cast<std::size_t>(r) * nb + (1 << c)] =
                        targets[static_cast<std::size_t>(r) * n + c];
                }
            }
            ad::Value diff =
                t.sub(result.prediction, t.constant(ad::Shape{rows, 1, n}, target_mv));
            result.loss = t.scale(t.sumsq_grade(diff, 1), 1.0 / (static_cast<double>(rows) * n));
            result.has_loss = true;
        }
    } else {
        ad::Value per_node = t.grade_mask(head_.forward(t, b, h), 0);
        result.prediction = t.segment_sum(per_node, plan.node_graph, plan.num_graphs);
        if (!targets.empty()) {
            if (targets.size() != static_cast<std::size_t>(plan.num_graphs)) {
                throw ConfigError("forward: scalar targets must hold one value per graph");
            }
            std::vector<double> target_mv(
                static_cast<std::size_t>(plan.num_graphs) * nb, 0.0);
            for (int gidx = 0; gidx < plan.num_graphs; ++gidx) {
                target_mv[static_cast<std::size_t>(gidx) * nb] =
                    targets[static_cast<std::size_t>(gidx)];
            }
            ad::Value diff = t.sub(result.prediction,
                                   t.constant(ad::Shape{plan.num_graphs, 1, n}, target_mv));
            result.loss =
                t.scale(t.sumsq_grade(diff, 0), 1.0 / static_cast<double>(plan.num_graphs));
            result.has_loss = true;
        }
    }
    return result;
}

std::vector<double> CgeGnn::extract(const ad::Tape& t, ad::Value prediction) const {
    const int n = cfg_.space_dim;
    const int nb = 1 << n;
    const auto& shape = t.shape(prediction);
    auto data = t.value(prediction);
    std::vector<double> out;
    if (cfg_.head == Head::Vector) {
        out.resize(static_cast<std::size_t>(shape.batch) * n);
        for (int r = 0; r < shape.batch; ++r) {
            for (int c = 0; c < n; ++c) {
                out[static_cast<std::size_t>(r) * n + c] =
                    data[static_cast<std::size_t>(r) * nb + (1 << c)];
            }
        }
    } else {
        out.resize(static_cast<std::size_t>(shape.batch));
        for (int r = 0; r < shape.batch; ++r) {
            out[static_cast<std::size_t>(r)] = data[static_cast<std::size_t>(r) * nb];
        }
    }
    return out;
}

}  // namespace cge
