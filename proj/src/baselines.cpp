#include "cge/baselines.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>

#include "cge/errors.hpp"

namespace cge {

namespace {

using ad::Shape;
using ad::Tape;
using ad::Value;

struct BatchLayout {
    int rows = 0;                 // total nodes
    std::vector<int> node_base;   // first global row of each graph
    std::vector<int> node_graph;  // graph id per global row
};

BatchLayout layout_batch(const std::vector<GeometricGraph>& batch) {
    BatchLayout out;
    for (std::size_t g = 0; g < batch.size(); ++g) {
        out.node_base.push_back(out.rows);
        for (int i = 0; i < batch[g].num_nodes; ++i) {
            out.node_graph.push_back(static_cast<int>(g));
        }
        out.rows += batch[g].num_nodes;
    }
    return out;
}

void check_graph(const BaselineConfig& cfg, const GeometricGraph& g) {
    g.validate();
    if (g.space_dim != cfg.space_dim) {
        throw ConfigError("graph space_dim does not match the model");
    }
    const bool has_vel = !g.velocities.empty();
    if (has_vel != (cfg.vector_features == 1)) {
        throw ConfigError("graph velocities do not match vector_features");
    }
    if (g.num_scalars != cfg.scalar_features) {
        throw ConfigError("graph scalar attributes do not match scalar_features");
    }
    if (g.edge_attr_dim != cfg.edge_attr_dim) {
        throw ConfigError("graph edge attributes do not match edge_attr_dim");
    }
}

Value mse_loss(Tape& t, Value pred, std::span<const double> targets, std::size_t expect,
               const char* what) {
    if (targets.size() != expect) {
        throw ConfigError(std::string("target size does not match ") + what);
    }
    const Value diff = t.sub(pred, t.constant(t.shape(pred), targets));
    return t.scale(t.sumsq_grade(diff, 0), 1.0 / static_cast<double>(expect));
}

}  // namespace

void BaselineConfig::validate() const {
    if (space_dim < 1 || space_dim > 8) throw ConfigError("space_dim must be in [1, 8]");
    if (num_features < 1) throw ConfigError("num_features must be >= 1");
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (hidden < 0) throw ConfigError("hidden must be >= 0");
    if (vector_features != 0 && vector_features != 1) {
        throw ConfigError("vector_features must be 0 or 1");
    }
    if (scalar_features < 0) throw ConfigError("scalar_features must be >= 0");
    if (edge_attr_dim < 0) throw ConfigError("edge_attr_dim must be >= 0");
    if (velocity_gate && vector_features != 1) {
        throw ConfigError("velocity_gate needs vector_features == 1");
    }
}

// ---------------------------------------------------------------------------
// GnnModel
// ---------------------------------------------------------------------------

GnnModel::GnnModel(BaselineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int n = cfg_.space_dim;
    const int nf = cfg_.num_features;
    const int hid = cfg_.hidden_width();
    const int in0 = n + cfg_.vector_features * n + cfg_.scalar_features;
    embed_ = nn::DenseMLP(store_, "embed", {in0, nf});
    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        msg_.emplace_back(store_, p + ".msg", std::vector<int>{2 * nf + cfg_.edge_attr_dim, hid, hid, nf});
        upd_.emplace_back(store_, p + ".upd", std::vector<int>{2 * nf, hid, hid, nf});
    }
    dec_ = nn::DenseMLP(store_, "dec", {nf, cfg_.head == Head::Vector ? n : 1});
}

void GnnModel::init(Rng& rng) {
    embed_.init(store_, rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        msg_[static_cast<std::size_t>(l)].init(store_, rng);
        upd_[static_cast<std::size_t>(l)].init(store_, rng);
    }
    dec_.init(store_, rng);
}

ForwardResult GnnModel::forward(Tape& t, const nn::Bound& b,
                                const std::vector<GeometricGraph>& batch,
                                std::span<const double> targets) const {
    if (batch.empty()) throw ConfigError("empty batch");
    for (const auto& g : batch) check_graph(cfg_, g);
    const BatchLayout lay = layout_batch(batch);
    const int n = cfg_.space_dim;
    const int nf = cfg_.num_features;
    const int in0 = n + cfg_.vector_features * n + cfg_.scalar_features;

    std::vector<double> feats(static_cast<std::size_t>(lay.rows) * in0);
    std::vector<int> recv, src;
    std::vector<double> pair_attr;
    for (std::size_t g = 0; g < batch.size(); ++g) {
        const GeometricGraph& gg = batch[g];
        const int base = lay.node_base[g];
        for (int i = 0; i < gg.num_nodes; ++i) {
            double* row = feats.data() + static_cast<std::size_t>(base + i) * in0;
            for (int c = 0; c < n; ++c) row[c] = gg.positions[static_cast<std::size_t>(i) * n + c];
            int off = n;
            if (cfg_.vector_features == 1) {
                for (int c = 0; c < n; ++c) row[off + c] = gg.velocities[static_cast<std::size_t>(i) * n + c];
                off += n;
            }
            for (int s = 0; s < cfg_.scalar_features; ++s) {
                row[off + s] = gg.scalars[static_cast<std::size_t>(i) * cfg_.scalar_features + s];
            }
        }
        std::map<std::pair<int, int>, std::size_t> edge_row;
        for (std::size_t e = 0; e < gg.topology.edges.size(); ++e) edge_row[gg.topology.edges[e]] = e;
        const auto adj = gg.topology.adjacency();
        for (int i = 0; i < gg.num_nodes; ++i) {
            for (int j : adj[static_cast<std::size_t>(i)]) {
                recv.push_back(base + i);
                src.push_back(base + j);
                const auto key = std::minmax(i, j);
                const std::size_t e = edge_row.at({key.first, key.second});
                for (int c = 0; c < cfg_.edge_attr_dim; ++c) {
                    pair_attr.push_back(gg.edge_attrs[e * cfg_.edge_attr_dim + c]);
                }
            }
        }
    }

    Value h = embed_.forward(t, b, t.constant(Shape{lay.rows, in0, 0}, feats));
    const bool have_pairs = !recv.empty();
    Value attr{};
    if (have_pairs && cfg_.edge_attr_dim > 0) {
        attr = t.constant(Shape{static_cast<int>(recv.size()), cfg_.edge_attr_dim, 0},
                          pair_attr);
    }
    for (int l = 0; l < cfg_.num_layers; ++l) {
        Value agg;
        if (have_pairs) {
            std::vector<Value> parts = {t.gather_rows(h, recv), t.gather_rows(h, src)};
            if (cfg_.edge_attr_dim > 0) parts.push_back(attr);
            const Value m = msg_[static_cast<std::size_t>(l)].forward(t, b, t.concat_channels(parts));
            agg = t.segment_sum(m, recv, lay.rows);
        } else {
            agg = t.zeros(Shape{lay.rows, nf, 0});
        }
        h = upd_[static_cast<std::size_t>(l)].forward(t, b, t.concat_channels({h, agg}));
    }

    ForwardResult out;
    if (cfg_.head == Head::Vector) {
        out.prediction = dec_.forward(t, b, h);
        if (!targets.empty()) {
            out.loss = mse_loss(t, out.prediction, targets,
                                static_cast<std::size_t>(lay.rows) * n, "total_nodes * space_dim");
            out.has_loss = true;
        }
    } else {
        const Value per_node = dec_.forward(t, b, h);
        out.prediction = t.segment_sum(per_node, lay.node_graph, static_cast<int>(batch.size()));
        if (!targets.empty()) {
            out.loss = mse_loss(t, out.prediction, targets, batch.size(), "one value per graph");
            out.has_loss = true;
        }
    }
    return out;
}

std::vector<double> GnnModel::extract(const Tape& t, Value prediction) const {
    const auto& v = t.value(prediction);
    return std::vector<double>(v.begin(), v.end());
}

// ---------------------------------------------------------------------------
// EgnnModel
// ---------------------------------------------------------------------------

EgnnModel::EgnnModel(BaselineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int nf = cfg_.num_features;
    const int hid = cfg_.hidden_width();
    const int in0 = 1 + cfg_.vector_features + cfg_.scalar_features;
    embed_ = nn::DenseMLP(store_, "embed", {in0, nf});
    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        msg_.emplace_back(store_, p + ".msg",
                          std::vector<int>{2 * nf + 1 + cfg_.edge_attr_dim, hid, hid, nf});
        xgate_.emplace_back(store_, p + ".x", std::vector<int>{nf, hid, hid, 1});
        if (cfg_.velocity_gate) {
            vgate_.emplace_back(store_, p + ".vel", std::vector<int>{nf, hid, hid, 1});
        }
        upd_.emplace_back(store_, p + ".upd", std::vector<int>{2 * nf, hid, hid, nf});
    }
    if (cfg_.head == Head::Scalar) dec_ = nn::DenseMLP(store_, "dec", {nf, 1});
}

void EgnnModel::init(Rng& rng) {
    embed_.init(store_, rng);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        msg_[static_cast<std::size_t>(l)].init(store_, rng);
        xgate_[static_cast<std::size_t>(l)].init(store_, rng);
        if (cfg_.velocity_gate) vgate_[static_cast<std::size_t>(l)].init(store_, rng);
        upd_[static_cast<std::size_t>(l)].init(store_, rng);
    }
    if (cfg_.head == Head::Scalar) dec_.init(store_, rng);
}

ForwardResult EgnnModel::forward(Tape& t, const nn::Bound& b,
                                 const std::vector<GeometricGraph>& batch,
                                 std::span<const double> targets) const {
    if (batch.empty()) throw ConfigError("empty batch");
    for (const auto& g : batch) {
        check_graph(cfg_, g);
        if (g.num_nodes < 2) {
            throw ConfigError("position update divides by M - 1; need at least 2 nodes");
        }
    }
    const BatchLayout lay = layout_batch(batch);
    const int n = cfg_.space_dim;
    const int nf = cfg_.num_features;
    const int in0 = 1 + cfg_.vector_features + cfg_.scalar_features;

    std::vector<double> feats(static_cast<std::size_t>(lay.rows) * in0);
    std::vector<double> pos(static_cast<std::size_t>(lay.rows) * n);
    std::vector<double> vel;
    if (cfg_.velocity_gate) vel.resize(static_cast<std::size_t>(lay.rows) * n);
    std::vector<int> recv, src;       // all ordered pairs, receiver-major
    std::vector<double> pair_attr;    // edge attrs (zeros for non-edges)
    std::vector<double> pair_scale;   // 1/(M_g - 1) per pair
    std::vector<int> nbr_pair;        // indices into the pair list that are edges
    std::vector<int> nbr_recv;        // receiver of those pairs
    for (std::size_t g = 0; g < batch.size(); ++g) {
        const GeometricGraph& gg = batch[g];
        const int base = lay.node_base[g];
        for (int i = 0; i < gg.num_nodes; ++i) {
            double* row = feats.data() + static_cast<std::size_t>(base + i) * in0;
            row[0] = 1.0;
            int off = 1;
            if (cfg_.vector_features == 1) {
                double v2 = 0.0;
                for (int c = 0; c < n; ++c) {
                    const double v = gg.velocities[static_cast<std::size_t>(i) * n + c];
                    v2 += v * v;
                }
                row[off++] = v2;
            }
            for (int s = 0; s < cfg_.scalar_features; ++s) {
                row[off + s] = gg.scalars[static_cast<std::size_t>(i) * cfg_.scalar_features + s];
            }
            for (int c = 0; c < n; ++c) {
                pos[static_cast<std::size_t>(base + i) * n + c] =
                    gg.positions[static_cast<std::size_t>(i) * n + c];
                if (cfg_.velocity_gate) {
                    vel[static_cast<std::size_t>(base + i) * n + c] =
                        gg.velocities[static_cast<std::size_t>(i) * n + c];
                }
            }
        }
        std::map<std::pair<int, int>, std::size_t> edge_row;
        for (std::size_t e = 0; e < gg.topology.edges.size(); ++e) edge_row[gg.topology.edges[e]] = e;
        const double inv = 1.0 / static_cast<double>(gg.num_nodes - 1);
        for (int i = 0; i < gg.num_nodes; ++i) {
            for (int j = 0; j < gg.num_nodes; ++j) {
                if (j == i) continue;
                const auto key = std::minmax(i, j);
                const auto it = edge_row.find({key.first, key.second});
                if (it != edge_row.end()) {
                    nbr_pair.push_back(static_cast<int>(recv.size()));
                    nbr_recv.push_back(base + i);
                }
                recv.push_back(base + i);
                src.push_back(base + j);
                pair_scale.push_back(inv);
                for (int c = 0; c < cfg_.edge_attr_dim; ++c) {
                    pair_attr.push_back(it != edge_row.end()
                                            ? gg.edge_attrs[it->second * cfg_.edge_attr_dim + c]
                                            : 0.0);
                }
            }
        }
    }

    const int num_pairs = static_cast<int>(recv.size());
    Value h = embed_.forward(t, b, t.constant(Shape{lay.rows, in0, 0}, feats));
    Value x = t.constant(Shape{lay.rows, n, 0}, pos);
    Value v{};
    if (cfg_.velocity_gate) v = t.constant(Shape{lay.rows, n, 0}, vel);
    Value attr{};
    if (cfg_.edge_attr_dim > 0) {
        attr = t.constant(Shape{num_pairs, cfg_.edge_attr_dim, 0}, pair_attr);
    }
    const Value inv_m = t.constant(Shape{num_pairs, 1, 0}, pair_scale);

    for (int l = 0; l < cfg_.num_layers; ++l) {
        const Value xd = t.sub(t.gather_rows(x, recv), t.gather_rows(x, src));
        std::vector<Value> parts = {t.gather_rows(h, recv), t.gather_rows(h, src),
                                    t.rowwise_sumsq(xd)};
        if (cfg_.edge_attr_dim > 0) parts.push_back(attr);
        const Value m = msg_[static_cast<std::size_t>(l)].forward(t, b, t.concat_channels(parts));
        const Value w = t.mul_broadcast(xgate_[static_cast<std::size_t>(l)].forward(t, b, m), inv_m);
        x = t.add(x, t.segment_sum(t.mul_broadcast(xd, w), recv, lay.rows));
        if (cfg_.velocity_gate) {
            const Value gv = vgate_[static_cast<std::size_t>(l)].forward(t, b, h);
            x = t.add(x, t.mul_broadcast(v, gv));
        }
        Value agg;
        if (!nbr_pair.empty()) {
            agg = t.segment_sum(t.gather_rows(m, nbr_pair), nbr_recv, lay.rows);
        } else {
            agg = t.zeros(Shape{lay.rows, nf, 0});
        }
        h = upd_[static_cast<std::size_t>(l)].forward(t, b, t.concat_channels({h, agg}));
    }

    ForwardResult out;
    if (cfg_.head == Head::Vector) {
        out.prediction = x;
        if (!targets.empty()) {
            out.loss = mse_loss(t, out.prediction, targets,
                                static_cast<std::size_t>(lay.rows) * n, "total_nodes * space_dim");
            out.has_loss = true;
        }
    } else {
        const Value per_node = dec_.forward(t, b, h);
        out.prediction = t.segment_sum(per_node, lay.node_graph, static_cast<int>(batch.size()));
        if (!targets.empty()) {
            out.loss = mse_loss(t, out.prediction, targets, batch.size(), "one value per graph");
            out.has_loss = true;
        }
    }
    return out;
}

std::vector<double> EgnnModel::extract(const Tape& t, Value prediction) const {
    const auto& v = t.value(prediction);
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace cge
