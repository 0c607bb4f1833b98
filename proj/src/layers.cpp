#include "cge/layers.hpp"

#include <cmath>

#include "cge/errors.hpp"

namespace cge::nn {

// ---------------------------------------------------------------------------
// ParamStore / Bound
// ---------------------------------------------------------------------------

int ParamStore::add(std::string name, std::size_t size) {
    if (size == 0) throw ConfigError("ParamStore: empty block '" + name + "'");
    ParamBlock b;
    b.name = std::move(name);
    b.offset = values_.size();
    b.size = size;
    blocks_.push_back(std::move(b));
    values_.resize(values_.size() + size, 0.0);
    return static_cast<int>(blocks_.size()) - 1;
}

std::span<double> ParamStore::values(int id) {
    const ParamBlock& b = block(id);
    return std::span<double>(values_.data() + b.offset, b.size);
}

std::span<const double> ParamStore::values(int id) const {
    const ParamBlock& b = block(id);
    return std::span<const double>(values_.data() + b.offset, b.size);
}

void ParamStore::fill(int id, double v) {
    for (double& x : values(id)) x = v;
}

void ParamStore::init_uniform(Rng& rng, int id, double bound) {
    for (double& x : values(id)) x = rng.uniform(-bound, bound);
}

Bound::Bound(Tape& tape, const ParamStore& store) : store_(&store) {
    leaves_.reserve(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
        leaves_.push_back(tape.param(store.values(i)));
    }
}

std::vector<double> Bound::collect_grads(const Tape& tape) const {
    std::vector<double> flat(store_->total(), 0.0);
    for (int i = 0; i < store_->count(); ++i) {
        auto g = tape.grad(leaves_[static_cast<std::size_t>(i)]);
        if (g.empty()) continue;
        const ParamBlock& b = store_->block(i);
        std::copy(g.begin(), g.end(), flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    return flat;
}

// ---------------------------------------------------------------------------
// GradeLinear
// ---------------------------------------------------------------------------

GradeLinear::GradeLinear(ParamStore& ps, const std::string& name, int dim_, int p, int q)
    : dim(dim_), channels_in(p), channels_out(q) {
    if (p < 1 || q < 1) throw ConfigError("GradeLinear: channel counts must be positive");
    w = ps.add(name + ".w",
               static_cast<std::size_t>(q) * static_cast<std::size_t>(p) * (dim + 1));
}

void GradeLinear::init(ParamStore& ps, Rng& rng) const {
    ps.init_uniform(rng, w, 1.0 / std::sqrt(static_cast<double>(channels_in)));
}

Value GradeLinear::forward(Tape& t, const Bound& b, Value x) const {
    return t.linear_mix(x, b[w], channels_out);
}

// ---------------------------------------------------------------------------
// GeometricLayer
// ---------------------------------------------------------------------------

GeometricLayer::GeometricLayer(ParamStore& ps, const std::string& name, int dim_, int p, int q,
                               bool fc)
    : dim(dim_), channels_in(p), channels_out(q), fully_connected(fc) {
    if (p < 1 || q < 1) throw ConfigError("GeometricLayer: channel counts must be positive");
    if (!fc && p != q) {
        throw ConfigError("GeometricLayer: the channel-tied variant needs equal widths");
    }
    const std::size_t g1 = static_cast<std::size_t>(dim) + 1;
    const std::size_t triples = g1 * g1 * g1;
    w_pre = ps.add(name + ".pre", static_cast<std::size_t>(p) * p * g1);
    w_mix = ps.add(name + ".mix",
                   fc ? static_cast<std::size_t>(q) * p * triples
                      : static_cast<std::size_t>(p) * triples);
}

void GeometricLayer::init(ParamStore& ps, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels_in));
    ps.init_uniform(rng, w_pre, bound);
    ps.init_uniform(rng, w_mix, bound);
}

Value GeometricLayer::forward(Tape& t, const Bound& b, Value x) const {
    Value z = t.linear_mix(x, b[w_pre], channels_in);
    return t.geometric_mix(x, z, b[w_mix], channels_out, fully_connected);
}

// ---------------------------------------------------------------------------
// GradeNorm
// ---------------------------------------------------------------------------

GradeNorm::GradeNorm(ParamStore& ps, const std::string& name, int dim_, int c)
    : dim(dim_), channels(c) {
    if (c < 1) throw ConfigError("GradeNorm: channel count must be positive");
    phi = ps.add(name + ".phi", static_cast<std::size_t>(c) * (dim + 1));
}

void GradeNorm::init(ParamStore& ps) const { ps.fill(phi, 0.0); }

Value GradeNorm::forward(Tape& t, const Bound& b, Value x) const {
    return t.normalize_grades(x, b[phi]);
}

// ---------------------------------------------------------------------------
// MvMLP
// ---------------------------------------------------------------------------

MvMLP::MvMLP(ParamStore& ps, const std::string& name, int dim_, int p_in, int hidden_, int p_out,
             int depth_)
    : dim(dim_), channels_in(p_in), hidden(hidden_), channels_out(p_out), depth(depth_) {
    if (depth < 1) throw ConfigError("MvMLP: depth must be at least 1");
    int cur = p_in;
    for (int d = 0; d < depth; ++d) {
        const std::string stem = name + ".block" + std::to_string(d);
        linears.emplace_back(ps, stem + ".lin", dim, cur, hidden);
        geoms.emplace_back(ps, stem + ".geo", dim, hidden, hidden, true);
        norms.emplace_back(ps, stem + ".norm", dim, hidden);
        cur = hidden;
    }
    linears.emplace_back(ps, name + ".out", dim, cur, p_out);
}

void MvMLP::init(ParamStore& ps, Rng& rng) const {
    for (int d = 0; d < depth; ++d) {
        linears[static_cast<std::size_t>(d)].init(ps, rng);
        geoms[static_cast<std::size_t>(d)].init(ps, rng);
        norms[static_cast<std::size_t>(d)].init(ps);
    }
    linears.back().init(ps, rng);
}

Value MvMLP::forward(Tape& t, const Bound& b, Value x) const {
    Value h = x;
    for (int d = 0; d < depth; ++d) {
        h = linears[static_cast<std::size_t>(d)].forward(t, b, h);
        h = geoms[static_cast<std::size_t>(d)].forward(t, b, h);
        h = norms[static_cast<std::size_t>(d)].forward(t, b, h);
        h = t.nonlinear_gate(h);
    }
    return linears.back().forward(t, b, h);
}

// ---------------------------------------------------------------------------
// DenseMLP
// ---------------------------------------------------------------------------

DenseMLP::DenseMLP(ParamStore& ps, const std::string& name, std::vector<int> sizes_,
                   FinalAct final_act_)
    : sizes(std::move(sizes_)), final_act(final_act_) {
    if (sizes.size() < 2) throw ConfigError("DenseMLP: need at least input and output sizes");
    for (int s : sizes) {
        if (s < 1) throw ConfigError("DenseMLP: layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::string stem = name + ".l" + std::to_string(l);
        ws.push_back(ps.add(stem + ".w", static_cast<std::size_t>(sizes[l + 1]) * sizes[l]));
        bs.push_back(ps.add(stem + ".b", static_cast<std::size_t>(sizes[l + 1])));
    }
}

void DenseMLP::init(ParamStore& ps, Rng& rng) const {
    for (std::size_t l = 0; l < ws.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        ps.init_uniform(rng, ws[l], bound);
        ps.init_uniform(rng, bs[l], bound);
    }
}

Value DenseMLP::forward(Tape& t, const Bound& b, Value x) const {
    Value h = x;
    for (std::size_t l = 0; l < ws.size(); ++l) {
        h = t.dense_affine(h, b[ws[l]], b[bs[l]], sizes[l + 1]);
        const bool last = (l + 1 == ws.size());
        if (!last) {
            h = t.scalar_nonlin(h, ad::Nonlin::Relu);
        } else if (final_act == FinalAct::Relu) {
            h = t.scalar_nonlin(h, ad::Nonlin::Relu);
        } else if (final_act == FinalAct::Sigmoid) {
            h = t.scalar_nonlin(h, ad::Nonlin::Sigmoid);
        }
    }
    return h;
}

}  // namespace cge::nn
