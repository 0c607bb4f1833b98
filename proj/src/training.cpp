#include "cge/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "cge/baselines.hpp"
#include "cge/errors.hpp"
#include "cge/rng.hpp"

namespace cge {

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

void AdamState::reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double weight_decay) {
    if (params.size() != grads.size() || state.m.size() != params.size() ||
        state.v.size() != params.size()) {
        throw ConfigError("adam_step: parameter/gradient/state sizes disagree");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    state.t += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    const double shrink = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] *= shrink;
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// ---------------------------------------------------------------------------
// run configuration and model factory
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.lr = cfg.get_double("lr", t.lr);
    t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
    t.batch_size = static_cast<int>(cfg.get_int("batch_size", t.batch_size));
    t.max_iters = static_cast<int>(cfg.get_int("iters", t.max_iters));
    t.seed = cfg.get_u64("seed", t.seed);
    t.patience = static_cast<int>(cfg.get_int("patience", t.patience));
    t.eval_interval = static_cast<int>(cfg.get_int("eval_interval", t.eval_interval));
    t.cosine = cfg.get_bool("cosine", t.cosine);
    t.validate();
    return t;
}

std::unique_ptr<GraphModel> build_model(const KeyValueConfig& cfg) {
    const std::string kind = cfg.get_str("model", "cgegnn");
    const std::string task = cfg.get_str("task");
    if (task != "nbody" && task != "hull3d") {
        throw ConfigError("task must be nbody or hull3d, got '" + task + "'");
    }
    const bool nbody = task == "nbody";
    const int space_dim = static_cast<int>(cfg.get_int("space_dim", 3));
    const int features = static_cast<int>(cfg.get_int("features", 8));
    const int layers = static_cast<int>(cfg.get_int("layers", 2));
    const int hidden = static_cast<int>(cfg.get_int("hidden", 0));

    if (kind == "cgegnn") {
        ModelConfig mc;
        mc.space_dim = space_dim;
        mc.num_features = features;
        mc.num_layers = layers;
        mc.hidden = hidden;
        mc.mlp_depth = static_cast<int>(cfg.get_int("mlp_depth", 2));
        mc.orders = cfg.get_int_list("orders", {1});
        mc.k_hops = static_cast<int>(cfg.get_int("k_hops", 1));
        mc.max_subsets_per_node = cfg.get_u64("max_subsets", 0);
        mc.vector_features = nbody ? 1 : 0;
        mc.scalar_features = nbody ? 1 : 0;
        mc.edge_attr_dim = nbody ? 1 : 0;
        mc.head = nbody ? Head::Vector : Head::Scalar;
        mc.validate();
        return std::make_unique<CgeGnn>(mc);
    }
    if (kind == "gnn" || kind == "egnn") {
        BaselineConfig bc;
        bc.space_dim = space_dim;
        bc.num_features = features;
        bc.num_layers = layers;
        bc.hidden = hidden;
        bc.vector_features = nbody ? 1 : 0;
        bc.scalar_features = nbody ? 1 : 0;
        bc.edge_attr_dim = nbody ? 1 : 0;
        bc.head = nbody ? Head::Vector : Head::Scalar;
        bc.velocity_gate = kind == "egnn" && cfg.get_bool("velocity_gate", nbody);
        bc.validate();
        if (kind == "gnn") return std::make_unique<GnnModel>(bc);
        return std::make_unique<EgnnModel>(bc);
    }
    throw ConfigError("model must be cgegnn, gnn, or egnn, got '" + kind + "'");
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(k)])) << (8 * k);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(k)])) << (8 * k);
        }
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    if (c.opt.m.size() != c.params.size() || c.opt.v.size() != c.params.size()) {
        throw ConfigError("checkpoint optimizer state does not match parameter count");
    }
    std::string out;
    out += "CGEG";
    put_u32(out, kVersion);
    put_u64(out, c.config_text.size());
    out += c.config_text;
    put_u64(out, c.params.size());
    for (double d : c.params) put_f64(out, d);
    for (double d : c.opt.m) put_f64(out, d);
    for (double d : c.opt.v) put_f64(out, d);
    put_u64(out, c.opt.t);
    put_u64(out, c.iteration);
    put_u64(out, c.rng_state.size());
    out += c.rng_state;

    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + p.parent_path().string());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    ByteReader r{buf};
    if (r.bytes(4) != "CGEG") throw IoError(path + " is not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.config_text = r.bytes(r.u64());
    const std::uint64_t n = r.u64();
    c.params.resize(n);
    for (auto& d : c.params) d = r.f64();
    c.opt.m.resize(n);
    for (auto& d : c.opt.m) d = r.f64();
    c.opt.v.resize(n);
    for (auto& d : c.opt.v) d = r.f64();
    c.opt.t = r.u64();
    c.iteration = r.u64();
    c.rng_state = r.bytes(r.u64());
    if (r.pos != buf.size()) throw IoError(path + ": trailing bytes after checkpoint payload");
    return c;
}

// ---------------------------------------------------------------------------
// evaluation and the training loop
// ---------------------------------------------------------------------------

double evaluate_mse(const GraphModel& model, const Dataset& ds, int batch_size) {
    if (ds.graphs.empty()) throw ConfigError("evaluate_mse: empty dataset");
    if (batch_size < 1) throw ConfigError("evaluate_mse: batch_size must be >= 1");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < ds.graphs.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(ds.graphs.size(), start + static_cast<std::size_t>(batch_size));
        const std::vector<GeometricGraph> batch(ds.graphs.begin() + static_cast<std::ptrdiff_t>(start),
                                                ds.graphs.begin() + static_cast<std::ptrdiff_t>(stop));
        ad::Tape t;
        const nn::Bound b(t, model.params());
        const auto res = model.forward(t, b, batch, {});
        const auto pred = model.extract(t, res.prediction);
        std::size_t off = 0;
        for (std::size_t g = start; g < stop; ++g) {
            for (double target : ds.targets[g]) {
                if (off >= pred.size()) throw NumericError("evaluate_mse: prediction too short");
                const double d = pred[off++] - target;
                sum += d * d;
            }
        }
        if (off != pred.size()) throw NumericError("evaluate_mse: prediction/target size mismatch");
        count += off;
    }
    return sum / static_cast<double>(count);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream ss;
    ss << std::setprecision(17);
    ss << "iter,train_loss,val_mse,wall_ms\n";
    for (const auto& r : rows) {
        ss << r.iter << ',' << r.train_loss << ',' << r.val_mse << ',' << r.wall_ms << '\n';
    }
    return ss.str();
}

TrainResult train(GraphModel& model, const Dataset& train_ds, const Dataset& val_ds,
                  const TrainConfig& cfg, const std::string& config_text) {
    cfg.validate();
    if (train_ds.graphs.empty() || val_ds.graphs.empty()) {
        throw ConfigError("train: train and val splits must be nonempty");
    }

    Rng rng(derive_seed(cfg.seed, 1));
    model.init(rng);
    AdamState opt;
    opt.reset(model.params().total());

    TrainResult out;
    out.best_val_mse = std::numeric_limits<double>::quiet_NaN();
    bool have_best = false;
    int since_best = 0;

    std::vector<int> order(train_ds.graphs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // forces a shuffle before the first batch

    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };
    auto snapshot = [&](std::uint64_t iter) {
        Checkpoint c;
        c.config_text = config_text;
        const auto flat = model.params().flat();
        c.params.assign(flat.begin(), flat.end());
        c.opt = opt;
        c.iteration = iter;
        std::ostringstream ss;
        ss << rng.engine();
        c.rng_state = ss.str();
        return c;
    };

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        std::vector<GeometricGraph> batch;
        std::vector<double> targets;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int k = 0; k < cfg.batch_size; ++k) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const int idx = order[cursor++];
            batch.push_back(train_ds.graphs[static_cast<std::size_t>(idx)]);
            const auto& tg = train_ds.targets[static_cast<std::size_t>(idx)];
            targets.insert(targets.end(), tg.begin(), tg.end());
        }

        const double lr_t =
            cfg.cosine ? cfg.lr * 0.5 *
                             (1.0 + std::cos(std::numbers::pi * static_cast<double>(iter - 1) /
                                             static_cast<double>(cfg.max_iters)))
                       : cfg.lr;

        ad::Tape t;
        const nn::Bound b(t, model.params());
        const auto res = model.forward(t, b, batch, targets);
        const double loss = t.value(res.loss)[0];
        if (!std::isfinite(loss)) {
            out.aborted = true;
            if (!have_best) {
                out.best = snapshot(static_cast<std::uint64_t>(iter - 1));
                have_best = true;
            }
            break;
        }
        t.backward(res.loss);
        const auto grads = b.collect_grads(t);
        try {
            adam_step(model.params().flat(), grads, opt, lr_t, cfg.weight_decay);
        } catch (const NumericError&) {
            // overflowed gradients: parameters are untouched, keep the last
            // good snapshot and stop
            out.aborted = true;
            if (!have_best) {
                out.best = snapshot(static_cast<std::uint64_t>(iter - 1));
                have_best = true;
            }
            break;
        }

        if (iter % cfg.eval_interval == 0 || iter == cfg.max_iters) {
            const double val = evaluate_mse(model, val_ds, cfg.batch_size);
            out.history.push_back({static_cast<std::uint64_t>(iter), loss, val, wall_ms()});
            if (!std::isfinite(val)) {
                out.aborted = true;
                if (!have_best) {
                    out.best = snapshot(static_cast<std::uint64_t>(iter));
                    have_best = true;
                }
                break;
            }
            if (!have_best || val < out.best_val_mse) {
                out.best = snapshot(static_cast<std::uint64_t>(iter));
                out.best_val_mse = val;
                out.best_iter = static_cast<std::uint64_t>(iter);
                have_best = true;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (!have_best) out.best = snapshot(0);  // unreachable in practice; keeps the contract total
    return out;
}

}  // namespace cge
