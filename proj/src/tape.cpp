#include "cge/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>

namespace cge::ad {

namespace {

enum Op : int {
    kLeaf,
    kConst,
    kAdd,
    kSub,
    kNeg,
    kScale,
    kConcat,
    kGather,
    kSegSum,
    kGeomProd,
    kLinearMix,
    kGeomMix,
    kGradeScale,
    kGradeMask,
    kNormalize,
    kGate,
    kScalarNonlin,
    kDenseAffine,
    kRowSumsq,
    kMulBroadcast,
    kSumsqGrade,
    kWeightedSum,
};

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

const std::vector<int>& grade_lut(int dim) {
    static std::array<std::unique_ptr<std::vector<int>>, CayleyTable::kMaxDim + 1> cache;
    static std::mutex mu;
    if (dim < 0 || dim > CayleyTable::kMaxDim) throw ConfigError("tape: dim outside [0, 8]");
    std::lock_guard<std::mutex> lock(mu);
    if (!cache[dim]) {
        auto lut = std::make_unique<std::vector<int>>(std::size_t(1) << dim);
        for (Blade b = 0; b < (Blade(1) << dim); ++b) (*lut)[b] = blade_grade(b);
        cache[dim] = std::move(lut);
    }
    return *cache[dim];
}

// Entry table for the weighted geometric product: entry e = g * 2^n + a is
// the blade pair (a, a^g) contributing to output blade g; tidx packs the
// grade triple (|a|, |a^g|, |g|).
struct MixPlan {
    int nb = 1;
    std::vector<double> sgn;
    std::vector<int> A, B, tidx;
};

const MixPlan& mix_plan(int dim) {
    static std::array<std::unique_ptr<MixPlan>, CayleyTable::kMaxDim + 1> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    if (!cache[dim]) {
        const CayleyTable& t = CayleyTable::shared(dim);
        auto p = std::make_unique<MixPlan>();
        const int nb = 1 << dim;
        p->nb = nb;
        const int entries = nb * nb;
        p->sgn.resize(entries);
        p->A.resize(entries);
        p->B.resize(entries);
        p->tidx.resize(entries);
        const int g1 = dim + 1;
        for (int g = 0; g < nb; ++g) {
            for (int a = 0; a < nb; ++a) {
                const int e = g * nb + a;
                const int b = a ^ g;
                p->A[e] = a;
                p->B[e] = b;
                p->sgn[e] = t.sign(Blade(a), Blade(b));
                p->tidx[e] = (t.grade(Blade(a)) * g1 + t.grade(Blade(b))) * g1 + t.grade(Blade(g));
            }
        }
        cache[dim] = std::move(p);
    }
    return *cache[dim];
}

}  // namespace

double canonical_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n == 1) return xs[0];
    if (n == 2) return xs[0] + xs[1];  // two-term addition commutes exactly
    std::array<double, 64> stack;
    std::vector<double> heap;
    double* buf;
    if (n <= stack.size()) {
        buf = stack.data();
    } else {
        heap.resize(n);
        buf = heap.data();
    }
    std::copy(xs.begin(), xs.end(), buf);
    std::sort(buf, buf + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += buf[i];
    return s;
}

Value Tape::check(Value v, const char* op) const {
    if (!v.valid() || v.tape != this || v.id >= size()) {
        throw ConfigError(std::string(op) + ": value does not belong to this tape");
    }
    return v;
}

int Tape::push(Node n) {
    const int id = size();
    nodes_.push_back(std::move(n));
    forward_node(nodes_.back());
    return id;
}

Value Tape::leaf(const Shape& s, std::span<const double> data, bool requires_grad) {
    if (data.size() != s.size()) throw ConfigError("leaf: data size does not match shape");
    if (s.dim < 0 || s.dim > CayleyTable::kMaxDim || s.batch < 1 || s.channels < 1) {
        throw ConfigError("leaf: bad shape");
    }
    Node n;
    n.op = kLeaf;
    n.shape = s;
    n.val.assign(data.begin(), data.end());
    n.rg = requires_grad;
    return Value{this, push(std::move(n))};
}

Value Tape::constant(const Shape& s, std::span<const double> data) { return leaf(s, data, false); }

Value Tape::zeros(const Shape& s) {
    std::vector<double> z(s.size(), 0.0);
    return leaf(s, z, false);
}

Value Tape::param(std::span<const double> data) {
    return leaf(Shape{1, static_cast<int>(data.size()), 0}, data, true);
}

static void expect_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) throw ConfigError(std::string(op) + ": shape mismatch");
}

Value Tape::add(Value a, Value b) {
    check(a, "add");
    check(b, "add");
    expect_same_shape(node(a).shape, node(b).shape, "add");
    Node n;
    n.op = kAdd;
    n.shape = node(a).shape;
    n.in = {a.id, b.id};
    n.rg = node(a).rg || node(b).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::sub(Value a, Value b) {
    check(a, "sub");
    check(b, "sub");
    expect_same_shape(node(a).shape, node(b).shape, "sub");
    Node n;
    n.op = kSub;
    n.shape = node(a).shape;
    n.in = {a.id, b.id};
    n.rg = node(a).rg || node(b).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::neg(Value a) {
    check(a, "neg");
    Node n;
    n.op = kNeg;
    n.shape = node(a).shape;
    n.in = {a.id};
    n.rg = node(a).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::scale(Value a, double s) {
    check(a, "scale");
    Node n;
    n.op = kScale;
    n.shape = node(a).shape;
    n.in = {a.id};
    n.aux = {s};
    n.rg = node(a).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::concat_channels(const std::vector<Value>& xs) {
    if (xs.empty()) throw ConfigError("concat_channels: no inputs");
    int channels = 0;
    bool rg = false;
    for (Value v : xs) {
        check(v, "concat_channels");
        if (node(v).shape.batch != node(xs[0]).shape.batch ||
            node(v).shape.dim != node(xs[0]).shape.dim) {
            throw ConfigError("concat_channels: batch/dim mismatch");
        }
        channels += node(v).shape.channels;
        rg = rg || node(v).rg;
    }
    Node n;
    n.op = kConcat;
    n.shape = Shape{node(xs[0]).shape.batch, channels, node(xs[0]).shape.dim};
    for (Value v : xs) n.in.push_back(v.id);
    n.rg = rg;
    return Value{this, push(std::move(n))};
}

Value Tape::gather_rows(Value x, std::vector<int> rows) {
    check(x, "gather_rows");
    const Shape& s = node(x).shape;
    for (int r : rows) {
        if (r < 0 || r >= s.batch) throw ConfigError("gather_rows: row index out of range");
    }
    Node n;
    n.op = kGather;
    n.shape = Shape{static_cast<int>(rows.size()), s.channels, s.dim};
    n.in = {x.id};
    n.idx = std::move(rows);
    n.rg = node(x).rg;
    if (n.shape.batch == 0) throw ConfigError("gather_rows: empty row list");
    return Value{this, push(std::move(n))};
}

Value Tape::segment_sum(Value x, std::vector<int> seg, int num_segments) {
    check(x, "segment_sum");
    const Shape& s = node(x).shape;
    if (static_cast<int>(seg.size()) != s.batch) {
        throw ConfigError("segment_sum: one segment id per input row required");
    }
    if (num_segments < 1) throw ConfigError("segment_sum: num_segments must be positive");
    for (std::size_t i = 0; i < seg.size(); ++i) {
        if (seg[i] < 0 || seg[i] >= num_segments) throw ConfigError("segment_sum: id out of range");
        if (i > 0 && seg[i] < seg[i - 1]) throw ConfigError("segment_sum: ids must be sorted");
    }
    Node n;
    n.op = kSegSum;
    n.shape = Shape{num_segments, s.channels, s.dim};
    n.in = {x.id};
    n.idx = std::move(seg);
    n.i0 = num_segments;
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::geometric_product(Value a, Value b) {
    check(a, "geometric_product");
    check(b, "geometric_product");
    expect_same_shape(node(a).shape, node(b).shape, "geometric_product");
    if (node(a).shape.dim < 1) throw ConfigError("geometric_product: dim must be >= 1");
    Node n;
    n.op = kGeomProd;
    n.shape = node(a).shape;
    n.in = {a.id, b.id};
    n.rg = node(a).rg || node(b).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::linear_mix(Value x, Value w, int channels_out) {
    check(x, "linear_mix");
    check(w, "linear_mix");
    const Shape& s = node(x).shape;
    if (channels_out < 1) throw ConfigError("linear_mix: channels_out must be positive");
    const std::size_t expect = static_cast<std::size_t>(channels_out) * s.channels * (s.dim + 1);
    if (node(w).val.size() != expect) {
        throw ConfigError("linear_mix: weight size must be q*p*(n+1)");
    }
    Node n;
    n.op = kLinearMix;
    n.shape = Shape{s.batch, channels_out, s.dim};
    n.in = {x.id, w.id};
    n.i0 = channels_out;
    n.rg = node(x).rg || node(w).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::geometric_mix(Value x, Value z, Value w, int channels_out, bool fully_connected) {
    check(x, "geometric_mix");
    check(z, "geometric_mix");
    check(w, "geometric_mix");
    expect_same_shape(node(x).shape, node(z).shape, "geometric_mix");
    const Shape& s = node(x).shape;
    if (s.dim < 1) throw ConfigError("geometric_mix: dim must be >= 1");
    if (channels_out < 1) throw ConfigError("geometric_mix: channels_out must be positive");
    const int g1 = s.dim + 1;
    const std::size_t triples = static_cast<std::size_t>(g1) * g1 * g1;
    const std::size_t expect = fully_connected
                                   ? static_cast<std::size_t>(channels_out) * s.channels * triples
                                   : static_cast<std::size_t>(s.channels) * triples;
    if (!fully_connected && channels_out != s.channels) {
        throw ConfigError("geometric_mix: plain variant requires channels_out == channels_in");
    }
    if (node(w).val.size() != expect) {
        throw ConfigError("geometric_mix: weight size mismatch");
    }
    Node n;
    n.op = kGeomMix;
    n.shape = Shape{s.batch, channels_out, s.dim};
    n.in = {x.id, z.id, w.id};
    n.i0 = channels_out;
    n.i1 = fully_connected ? 1 : 0;
    n.rg = node(x).rg || node(z).rg || node(w).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::grade_scale(Value x, Value w) {
    check(x, "grade_scale");
    check(w, "grade_scale");
    const Shape& s = node(x).shape;
    if (node(w).val.size() != static_cast<std::size_t>(s.channels) * (s.dim + 1)) {
        throw ConfigError("grade_scale: weight size must be C*(n+1)");
    }
    Node n;
    n.op = kGradeScale;
    n.shape = s;
    n.in = {x.id, w.id};
    n.rg = node(x).rg || node(w).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::grade_mask(Value x, int m) {
    check(x, "grade_mask");
    const Shape& s = node(x).shape;
    if (m < 0 || m > s.dim) throw ConfigError("grade_mask: grade outside [0, n]");
    Node n;
    n.op = kGradeMask;
    n.shape = s;
    n.in = {x.id};
    n.i0 = m;
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::normalize_grades(Value x, Value phi) {
    check(x, "normalize_grades");
    check(phi, "normalize_grades");
    const Shape& s = node(x).shape;
    if (node(phi).val.size() != static_cast<std::size_t>(s.channels) * (s.dim + 1)) {
        throw ConfigError("normalize_grades: parameter size must be C*(n+1)");
    }
    Node n;
    n.op = kNormalize;
    n.shape = s;
    n.in = {x.id, phi.id};
    n.rg = node(x).rg || node(phi).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::nonlinear_gate(Value x) {
    check(x, "nonlinear_gate");
    Node n;
    n.op = kGate;
    n.shape = node(x).shape;
    n.in = {x.id};
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::scalar_nonlin(Value x, Nonlin kind) {
    check(x, "scalar_nonlin");
    Node n;
    n.op = kScalarNonlin;
    n.shape = node(x).shape;
    n.in = {x.id};
    n.i0 = static_cast<int>(kind);
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::dense_affine(Value x, Value w, Value bias, int channels_out) {
    check(x, "dense_affine");
    check(w, "dense_affine");
    check(bias, "dense_affine");
    const Shape& s = node(x).shape;
    if (s.dim != 0) throw ConfigError("dense_affine: input must have dim 0");
    if (node(w).val.size() != static_cast<std::size_t>(channels_out) * s.channels) {
        throw ConfigError("dense_affine: weight size must be q*p");
    }
    if (node(bias).val.size() != static_cast<std::size_t>(channels_out)) {
        throw ConfigError("dense_affine: bias size must be q");
    }
    Node n;
    n.op = kDenseAffine;
    n.shape = Shape{s.batch, channels_out, 0};
    n.in = {x.id, w.id, bias.id};
    n.i0 = channels_out;
    n.rg = node(x).rg || node(w).rg || node(bias).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::rowwise_sumsq(Value x) {
    check(x, "rowwise_sumsq");
    Node n;
    n.op = kRowSumsq;
    n.shape = Shape{node(x).shape.batch, 1, 0};
    n.in = {x.id};
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::mul_broadcast(Value x, Value s) {
    check(x, "mul_broadcast");
    check(s, "mul_broadcast");
    const Shape& xs = node(x).shape;
    const Shape& ss = node(s).shape;
    if (!(ss.batch == xs.batch && ss.channels == 1 && ss.dim == 0)) {
        throw ConfigError("mul_broadcast: scalar input must be {B,1,0}");
    }
    Node n;
    n.op = kMulBroadcast;
    n.shape = xs;
    n.in = {x.id, s.id};
    n.rg = node(x).rg || node(s).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::sumsq_grade(Value x, int m) {
    check(x, "sumsq_grade");
    if (m < 0 || m > node(x).shape.dim) throw ConfigError("sumsq_grade: grade outside [0, n]");
    Node n;
    n.op = kSumsqGrade;
    n.shape = Shape{1, 1, 0};
    n.in = {x.id};
    n.i0 = m;
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

Value Tape::weighted_sum(Value x, std::vector<double> weights) {
    check(x, "weighted_sum");
    if (weights.size() != node(x).val.size()) {
        throw ConfigError("weighted_sum: weight count must match value count");
    }
    Node n;
    n.op = kWeightedSum;
    n.shape = Shape{1, 1, 0};
    n.in = {x.id};
    n.aux = std::move(weights);
    n.rg = node(x).rg;
    return Value{this, push(std::move(n))};
}

const Shape& Tape::shape(Value v) const { return node(check(v, "shape")).shape; }

std::span<const double> Tape::value(Value v) const { return node(check(v, "value")).val; }

std::span<const double> Tape::grad(Value v) const { return node(check(v, "grad")).grad; }

// ---------------------------------------------------------------------------
// forward kernels
// ---------------------------------------------------------------------------

void Tape::forward_node(Node& n) {
    if (n.op == kLeaf || n.op == kConst) return;
    n.val.assign(n.shape.size(), 0.0);
    const auto in = [&](int slot) -> const Node& {
        return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(slot)])];
    };

    switch (n.op) {
        case kAdd: {
            const auto& a = in(0).val;
            const auto& b = in(1).val;
            for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = a[i] + b[i];
            break;
        }
        case kSub: {
            const auto& a = in(0).val;
            const auto& b = in(1).val;
            for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = a[i] - b[i];
            break;
        }
        case kNeg: {
            const auto& a = in(0).val;
            for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = -a[i];
            break;
        }
        case kScale: {
            const auto& a = in(0).val;
            const double s = n.aux[0];
            for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = s * a[i];
            break;
        }
        case kConcat: {
            const int nb = n.shape.blades();
            const std::size_t row_out = static_cast<std::size_t>(n.shape.channels) * nb;
            for (int b = 0; b < n.shape.batch; ++b) {
                std::size_t off = 0;
                for (std::size_t s = 0; s < n.in.size(); ++s) {
                    const Node& src = nodes_[static_cast<std::size_t>(n.in[s])];
                    const std::size_t row_in = static_cast<std::size_t>(src.shape.channels) * nb;
                    std::copy_n(src.val.data() + b * row_in, row_in,
                                n.val.data() + b * row_out + off);
                    off += row_in;
                }
            }
            break;
        }
        case kGather: {
            const Node& x = in(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (std::size_t i = 0; i < n.idx.size(); ++i) {
                std::copy_n(x.val.data() + static_cast<std::size_t>(n.idx[i]) * row, row,
                            n.val.data() + i * row);
            }
            break;
        }
        case kSegSum: {
            const Node& x = in(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            std::vector<double> buf;
            int r = 0;
            const int rows = x.shape.batch;
            while (r < rows) {
                const int s = n.idx[static_cast<std::size_t>(r)];
                int r1 = r;
                while (r1 < rows && n.idx[static_cast<std::size_t>(r1)] == s) ++r1;
                const int cnt = r1 - r;
                for (std::size_t j = 0; j < row; ++j) {
                    buf.resize(static_cast<std::size_t>(cnt));
                    for (int k = 0; k < cnt; ++k) {
                        buf[static_cast<std::size_t>(k)] =
                            x.val[(static_cast<std::size_t>(r) + k) * row + j];
                    }
                    n.val[static_cast<std::size_t>(s) * row + j] = canonical_sum(buf);
                }
                r = r1;
            }
            break;
        }
        case kGeomProd: {
            const Node& a = in(0);
            const Node& b = in(1);
            const CayleyTable& t = CayleyTable::shared(n.shape.dim);
            const int nb = n.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(n.shape.batch) * n.shape.channels;
            for (std::size_t c = 0; c < cells; ++c) {
                const double* av = a.val.data() + c * nb;
                const double* bv = b.val.data() + c * nb;
                double* yv = n.val.data() + c * nb;
                for (int i = 0; i < nb; ++i) {
                    const double ai = av[i];
                    if (ai == 0.0) continue;
                    for (int j = 0; j < nb; ++j) {
                        yv[i ^ j] += t.sign(Blade(i), Blade(j)) * ai * bv[j];
                    }
                }
            }
            break;
        }
        case kLinearMix: {
            const Node& x = in(0);
            const Node& w = in(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int p = x.shape.channels;
            const int q = n.i0;
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                double* yr = n.val.data() + static_cast<std::size_t>(b) * q * nb;
                for (int co = 0; co < q; ++co) {
                    double* y = yr + static_cast<std::size_t>(co) * nb;
                    for (int ci = 0; ci < p; ++ci) {
                        const double* wr = w.val.data() + (static_cast<std::size_t>(co) * p + ci) * g1;
                        const double* xv = xr + static_cast<std::size_t>(ci) * nb;
                        for (int k = 0; k < nb; ++k) y[k] += wr[grades[static_cast<std::size_t>(k)]] * xv[k];
                    }
                }
            }
            break;
        }
        case kGeomMix: {
            const Node& x = in(0);
            const Node& z = in(1);
            const Node& w = in(2);
            const MixPlan& plan = mix_plan(n.shape.dim);
            const int nb = plan.nb;
            const int entries = nb * nb;
            const int p = x.shape.channels;
            const int q = n.i0;
            const bool fc = n.i1 != 0;
            const int g1 = n.shape.dim + 1;
            const int triples = g1 * g1 * g1;
            std::vector<double> xT(static_cast<std::size_t>(nb) * p);
            std::vector<double> zT(static_cast<std::size_t>(nb) * p);
            std::vector<double> u(static_cast<std::size_t>(entries) * p);
            if (fc) {
                // expanded weights: what[co][e][ci] = w[co][ci][tidx[e]]
                std::vector<double> what(static_cast<std::size_t>(q) * entries * p);
                for (int co = 0; co < q; ++co) {
                    for (int e = 0; e < entries; ++e) {
                        const int t = plan.tidx[static_cast<std::size_t>(e)];
                        double* dst = what.data() +
                                      (static_cast<std::size_t>(co) * entries + e) * p;
                        const double* src =
                            w.val.data() + static_cast<std::size_t>(co) * p * triples;
                        for (int ci = 0; ci < p; ++ci) dst[ci] = src[ci * triples + t];
                    }
                }
                for (int b = 0; b < n.shape.batch; ++b) {
                    const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                    const double* zr = z.val.data() + static_cast<std::size_t>(b) * p * nb;
                    for (int ci = 0; ci < p; ++ci) {
                        for (int k = 0; k < nb; ++k) {
                            xT[static_cast<std::size_t>(k) * p + ci] = xr[ci * nb + k];
                            zT[static_cast<std::size_t>(k) * p + ci] = zr[ci * nb + k];
                        }
                    }
                    for (int e = 0; e < entries; ++e) {
                        const double s = plan.sgn[static_cast<std::size_t>(e)];
                        const double* xa = xT.data() + static_cast<std::size_t>(plan.A[e]) * p;
                        const double* zb = zT.data() + static_cast<std::size_t>(plan.B[e]) * p;
                        double* ue = u.data() + static_cast<std::size_t>(e) * p;
                        for (int ci = 0; ci < p; ++ci) ue[ci] = s * xa[ci] * zb[ci];
                    }
                    double* yr = n.val.data() + static_cast<std::size_t>(b) * q * nb;
                    const int seg = nb * p;  // entries per output blade times channels
                    for (int co = 0; co < q; ++co) {
                        const double* wc = what.data() + static_cast<std::size_t>(co) * entries * p;
                        for (int g = 0; g < nb; ++g) {
                            const double* wseg = wc + static_cast<std::size_t>(g) * seg;
                            const double* useg = u.data() + static_cast<std::size_t>(g) * seg;
                            double acc = 0.0;
                            for (int i = 0; i < seg; ++i) acc += wseg[i] * useg[i];
                            yr[static_cast<std::size_t>(co) * nb + g] = acc;
                        }
                    }
                }
            } else {
                for (int b = 0; b < n.shape.batch; ++b) {
                    const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                    const double* zr = z.val.data() + static_cast<std::size_t>(b) * p * nb;
                    double* yr = n.val.data() + static_cast<std::size_t>(b) * p * nb;
                    for (int c = 0; c < p; ++c) {
                        const double* xv = xr + static_cast<std::size_t>(c) * nb;
                        const double* zv = zr + static_cast<std::size_t>(c) * nb;
                        const double* wc = w.val.data() + static_cast<std::size_t>(c) * triples;
                        double* yv = yr + static_cast<std::size_t>(c) * nb;
                        for (int e = 0; e < entries; ++e) {
                            yv[e >> n.shape.dim] += wc[plan.tidx[static_cast<std::size_t>(e)]] *
                                                    plan.sgn[static_cast<std::size_t>(e)] *
                                                    xv[plan.A[static_cast<std::size_t>(e)]] *
                                                    zv[plan.B[static_cast<std::size_t>(e)]];
                        }
                    }
                }
            }
            break;
        }
        case kGradeScale: {
            const Node& x = in(0);
            const Node& w = in(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    const double* wr = w.val.data() + static_cast<std::size_t>(c) * g1;
                    for (int k = 0; k < nb; ++k) {
                        n.val[off + k] = wr[grades[static_cast<std::size_t>(k)]] * x.val[off + k];
                    }
                }
            }
            break;
        }
        case kGradeMask: {
            const Node& x = in(0);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(n.shape.batch) * n.shape.channels;
            for (std::size_t c = 0; c < cells; ++c) {
                for (int k = 0; k < nb; ++k) {
                    if (grades[static_cast<std::size_t>(k)] == n.i0) {
                        n.val[c * nb + k] = x.val[c * nb + k];
                    }
                }
            }
            break;
        }
        case kNormalize: {
            const Node& x = in(0);
            const Node& phi = in(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    for (int m = 0; m < g1; ++m) {
                        double qm = 0.0;
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                qm += x.val[off + k] * x.val[off + k];
                            }
                        }
                        const double s = sigmoid(phi.val[static_cast<std::size_t>(c) * g1 + m]);
                        const double denom = s * (qm - 1.0) + 1.0;
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                n.val[off + k] = x.val[off + k] / denom;
                            }
                        }
                    }
                }
            }
            break;
        }
        case kGate: {
            const Node& x = in(0);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    n.val[off] = x.val[off] > 0.0 ? x.val[off] : 0.0;
                    for (int m = 1; m < g1; ++m) {
                        double qm = 0.0;
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                qm += x.val[off + k] * x.val[off + k];
                            }
                        }
                        const double g = sigmoid(qm);
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                n.val[off + k] = g * x.val[off + k];
                            }
                        }
                    }
                }
            }
            break;
        }
        case kScalarNonlin: {
            const Node& x = in(0);
            if (n.i0 == static_cast<int>(Nonlin::Relu)) {
                for (std::size_t i = 0; i < n.val.size(); ++i) {
                    n.val[i] = x.val[i] > 0.0 ? x.val[i] : 0.0;
                }
            } else {
                for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = sigmoid(x.val[i]);
            }
            break;
        }
        case kDenseAffine: {
            const Node& x = in(0);
            const Node& w = in(1);
            const Node& bias = in(2);
            const int p = x.shape.channels;
            const int q = n.i0;
            for (int b = 0; b < n.shape.batch; ++b) {
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * p;
                double* yr = n.val.data() + static_cast<std::size_t>(b) * q;
                for (int co = 0; co < q; ++co) {
                    const double* wr = w.val.data() + static_cast<std::size_t>(co) * p;
                    double acc = bias.val[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < p; ++ci) acc += wr[ci] * xr[ci];
                    yr[co] = acc;
                }
            }
            break;
        }
        case kRowSumsq: {
            const Node& x = in(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (int b = 0; b < n.shape.batch; ++b) {
                double acc = 0.0;
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * row;
                for (std::size_t i = 0; i < row; ++i) acc += xr[i] * xr[i];
                n.val[static_cast<std::size_t>(b)] = acc;
            }
            break;
        }
        case kMulBroadcast: {
            const Node& x = in(0);
            const Node& s = in(1);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (int b = 0; b < n.shape.batch; ++b) {
                const double sv = s.val[static_cast<std::size_t>(b)];
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * row;
                double* yr = n.val.data() + static_cast<std::size_t>(b) * row;
                for (std::size_t i = 0; i < row; ++i) yr[i] = sv * xr[i];
            }
            break;
        }
        case kSumsqGrade: {
            const Node& x = in(0);
            const auto& grades = grade_lut(x.shape.dim);
            const int nb = x.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(x.shape.batch) * x.shape.channels;
            double acc = 0.0;
            for (std::size_t c = 0; c < cells; ++c) {
                for (int k = 0; k < nb; ++k) {
                    if (grades[static_cast<std::size_t>(k)] == n.i0) {
                        acc += x.val[c * nb + k] * x.val[c * nb + k];
                    }
                }
            }
            n.val[0] = acc;
            break;
        }
        case kWeightedSum: {
            const Node& x = in(0);
            double acc = 0.0;
            for (std::size_t i = 0; i < x.val.size(); ++i) acc += n.aux[i] * x.val[i];
            n.val[0] = acc;
            break;
        }
        default:
            throw ConfigError("tape: unknown op in forward");
    }
}

// ---------------------------------------------------------------------------
// backward kernels
// ---------------------------------------------------------------------------

void Tape::backward(Value loss) {
    check(loss, "backward");
    if (node(loss).val.size() != 1) {
        throw ConfigError("backward: loss must be a scalar node");
    }
    for (Node& n : nodes_) {
        if (n.rg) {
            n.grad.assign(n.val.size(), 0.0);
        } else {
            n.grad.clear();
        }
    }
    Node& ln = node(loss);
    if (!ln.rg) return;  // loss does not depend on any differentiable leaf
    ln.grad[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.rg || n.op == kLeaf || n.op == kConst) continue;
        backward_node(id);
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const auto inode = [&](int slot) -> Node& {
        return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(slot)])];
    };
    const auto wants = [&](int slot) -> bool { return inode(slot).rg; };
    const std::vector<double>& g = n.grad;

    switch (n.op) {
        case kAdd: {
            for (int s = 0; s < 2; ++s) {
                if (!wants(s)) continue;
                auto& gi = inode(s).grad;
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
            }
            break;
        }
        case kSub: {
            if (wants(0)) {
                auto& gi = inode(0).grad;
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
            }
            if (wants(1)) {
                auto& gi = inode(1).grad;
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
            }
            break;
        }
        case kNeg: {
            if (wants(0)) {
                auto& gi = inode(0).grad;
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
            }
            break;
        }
        case kScale: {
            if (wants(0)) {
                const double s = n.aux[0];
                auto& gi = inode(0).grad;
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += s * g[i];
            }
            break;
        }
        case kConcat: {
            const int nb = n.shape.blades();
            const std::size_t row_out = static_cast<std::size_t>(n.shape.channels) * nb;
            for (int b = 0; b < n.shape.batch; ++b) {
                std::size_t off = 0;
                for (std::size_t s = 0; s < n.in.size(); ++s) {
                    Node& src = nodes_[static_cast<std::size_t>(n.in[s])];
                    const std::size_t row_in = static_cast<std::size_t>(src.shape.channels) * nb;
                    if (src.rg) {
                        const double* gr = g.data() + b * row_out + off;
                        double* gi = src.grad.data() + b * row_in;
                        for (std::size_t i = 0; i < row_in; ++i) gi[i] += gr[i];
                    }
                    off += row_in;
                }
            }
            break;
        }
        case kGather: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (std::size_t i = 0; i < n.idx.size(); ++i) {
                double* gi = x.grad.data() + static_cast<std::size_t>(n.idx[i]) * row;
                const double* gr = g.data() + i * row;
                for (std::size_t j = 0; j < row; ++j) gi[j] += gr[j];
            }
            break;
        }
        case kSegSum: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (int r = 0; r < x.shape.batch; ++r) {
                const double* gr = g.data() + static_cast<std::size_t>(n.idx[static_cast<std::size_t>(r)]) * row;
                double* gi = x.grad.data() + static_cast<std::size_t>(r) * row;
                for (std::size_t j = 0; j < row; ++j) gi[j] += gr[j];
            }
            break;
        }
        case kGeomProd: {
            Node& a = inode(0);
            Node& b = inode(1);
            const CayleyTable& t = CayleyTable::shared(n.shape.dim);
            const int nb = n.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(n.shape.batch) * n.shape.channels;
            for (std::size_t c = 0; c < cells; ++c) {
                const double* av = a.val.data() + c * nb;
                const double* bv = b.val.data() + c * nb;
                const double* gy = g.data() + c * nb;
                double* ga = a.rg ? a.grad.data() + c * nb : nullptr;
                double* gb = b.rg ? b.grad.data() + c * nb : nullptr;
                for (int i = 0; i < nb; ++i) {
                    for (int j = 0; j < nb; ++j) {
                        const double s = t.sign(Blade(i), Blade(j));
                        const double go = gy[i ^ j];
                        if (go == 0.0) continue;
                        if (ga) ga[i] += s * go * bv[j];
                        if (gb) gb[j] += s * go * av[i];
                    }
                }
            }
            break;
        }
        case kLinearMix: {
            Node& x = inode(0);
            Node& w = inode(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int p = x.shape.channels;
            const int q = n.i0;
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                const double* gr = g.data() + static_cast<std::size_t>(b) * q * nb;
                for (int co = 0; co < q; ++co) {
                    const double* gy = gr + static_cast<std::size_t>(co) * nb;
                    for (int ci = 0; ci < p; ++ci) {
                        const std::size_t woff = (static_cast<std::size_t>(co) * p + ci) * g1;
                        if (x.rg) {
                            double* gx = x.grad.data() + (static_cast<std::size_t>(b) * p + ci) * nb;
                            const double* wr = w.val.data() + woff;
                            for (int k = 0; k < nb; ++k) {
                                gx[k] += wr[grades[static_cast<std::size_t>(k)]] * gy[k];
                            }
                        }
                        if (w.rg) {
                            double* gw = w.grad.data() + woff;
                            const double* xv = xr + static_cast<std::size_t>(ci) * nb;
                            for (int k = 0; k < nb; ++k) {
                                gw[grades[static_cast<std::size_t>(k)]] += xv[k] * gy[k];
                            }
                        }
                    }
                }
            }
            break;
        }
        case kGeomMix: {
            Node& x = inode(0);
            Node& z = inode(1);
            Node& w = inode(2);
            const MixPlan& plan = mix_plan(n.shape.dim);
            const int nb = plan.nb;
            const int entries = nb * nb;
            const int p = x.shape.channels;
            const int q = n.i0;
            const bool fc = n.i1 != 0;
            const int g1 = n.shape.dim + 1;
            const int triples = g1 * g1 * g1;
            std::vector<double> xT(static_cast<std::size_t>(nb) * p);
            std::vector<double> zT(static_cast<std::size_t>(nb) * p);
            std::vector<double> u(static_cast<std::size_t>(entries) * p);
            std::vector<double> du(static_cast<std::size_t>(entries) * p);
            std::vector<double> gxT, gzT;
            if (x.rg) gxT.resize(static_cast<std::size_t>(nb) * p);
            if (z.rg) gzT.resize(static_cast<std::size_t>(nb) * p);
            if (fc) {
                std::vector<double> what(static_cast<std::size_t>(q) * entries * p);
                for (int co = 0; co < q; ++co) {
                    for (int e = 0; e < entries; ++e) {
                        const int t = plan.tidx[static_cast<std::size_t>(e)];
                        double* dst =
                            what.data() + (static_cast<std::size_t>(co) * entries + e) * p;
                        const double* src =
                            w.val.data() + static_cast<std::size_t>(co) * p * triples;
                        for (int ci = 0; ci < p; ++ci) dst[ci] = src[ci * triples + t];
                    }
                }
                std::vector<double> gwhat;
                if (w.rg) gwhat.assign(static_cast<std::size_t>(q) * entries * p, 0.0);
                const int seg = nb * p;
                for (int b = 0; b < n.shape.batch; ++b) {
                    const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                    const double* zr = z.val.data() + static_cast<std::size_t>(b) * p * nb;
                    for (int ci = 0; ci < p; ++ci) {
                        for (int k = 0; k < nb; ++k) {
                            xT[static_cast<std::size_t>(k) * p + ci] = xr[ci * nb + k];
                            zT[static_cast<std::size_t>(k) * p + ci] = zr[ci * nb + k];
                        }
                    }
                    for (int e = 0; e < entries; ++e) {
                        const double s = plan.sgn[static_cast<std::size_t>(e)];
                        const double* xa = xT.data() + static_cast<std::size_t>(plan.A[e]) * p;
                        const double* zb = zT.data() + static_cast<std::size_t>(plan.B[e]) * p;
                        double* ue = u.data() + static_cast<std::size_t>(e) * p;
                        for (int ci = 0; ci < p; ++ci) ue[ci] = s * xa[ci] * zb[ci];
                    }
                    std::fill(du.begin(), du.end(), 0.0);
                    const double* gr = g.data() + static_cast<std::size_t>(b) * q * nb;
                    for (int co = 0; co < q; ++co) {
                        const double* wc =
                            what.data() + static_cast<std::size_t>(co) * entries * p;
                        double* gwc =
                            w.rg ? gwhat.data() + static_cast<std::size_t>(co) * entries * p
                                 : nullptr;
                        for (int gb = 0; gb < nb; ++gb) {
                            const double gv = gr[static_cast<std::size_t>(co) * nb + gb];
                            if (gv == 0.0) continue;
                            const std::size_t off = static_cast<std::size_t>(gb) * seg;
                            const double* wseg = wc + off;
                            const double* useg = u.data() + off;
                            double* duseg = du.data() + off;
                            for (int i = 0; i < seg; ++i) duseg[i] += gv * wseg[i];
                            if (gwc) {
                                double* gwseg = gwc + off;
                                for (int i = 0; i < seg; ++i) gwseg[i] += gv * useg[i];
                            }
                        }
                    }
                    if (x.rg || z.rg) {
                        if (x.rg) std::fill(gxT.begin(), gxT.end(), 0.0);
                        if (z.rg) std::fill(gzT.begin(), gzT.end(), 0.0);
                        for (int e = 0; e < entries; ++e) {
                            const double s = plan.sgn[static_cast<std::size_t>(e)];
                            const double* xa = xT.data() + static_cast<std::size_t>(plan.A[e]) * p;
                            const double* zb = zT.data() + static_cast<std::size_t>(plan.B[e]) * p;
                            const double* duseg = du.data() + static_cast<std::size_t>(e) * p;
                            if (x.rg) {
                                double* gx = gxT.data() + static_cast<std::size_t>(plan.A[e]) * p;
                                for (int ci = 0; ci < p; ++ci) gx[ci] += duseg[ci] * s * zb[ci];
                            }
                            if (z.rg) {
                                double* gz = gzT.data() + static_cast<std::size_t>(plan.B[e]) * p;
                                for (int ci = 0; ci < p; ++ci) gz[ci] += duseg[ci] * s * xa[ci];
                            }
                        }
                        for (int ci = 0; ci < p; ++ci) {
                            for (int k = 0; k < nb; ++k) {
                                if (x.rg) {
                                    x.grad[(static_cast<std::size_t>(b) * p + ci) * nb + k] +=
                                        gxT[static_cast<std::size_t>(k) * p + ci];
                                }
                                if (z.rg) {
                                    z.grad[(static_cast<std::size_t>(b) * p + ci) * nb + k] +=
                                        gzT[static_cast<std::size_t>(k) * p + ci];
                                }
                            }
                        }
                    }
                }
                if (w.rg) {
                    for (int co = 0; co < q; ++co) {
                        double* gw = w.grad.data() + static_cast<std::size_t>(co) * p * triples;
                        const double* gwc =
                            gwhat.data() + static_cast<std::size_t>(co) * entries * p;
                        for (int e = 0; e < entries; ++e) {
                            const int t = plan.tidx[static_cast<std::size_t>(e)];
                            for (int ci = 0; ci < p; ++ci) {
                                gw[ci * triples + t] += gwc[static_cast<std::size_t>(e) * p + ci];
                            }
                        }
                    }
                }
            } else {
                for (int b = 0; b < n.shape.batch; ++b) {
                    const double* xr = x.val.data() + static_cast<std::size_t>(b) * p * nb;
                    const double* zr = z.val.data() + static_cast<std::size_t>(b) * p * nb;
                    const double* gr = g.data() + static_cast<std::size_t>(b) * p * nb;
                    for (int c = 0; c < p; ++c) {
                        const double* xv = xr + static_cast<std::size_t>(c) * nb;
                        const double* zv = zr + static_cast<std::size_t>(c) * nb;
                        const double* gy = gr + static_cast<std::size_t>(c) * nb;
                        const double* wc = w.val.data() + static_cast<std::size_t>(c) * triples;
                        double* gw = w.rg ? w.grad.data() + static_cast<std::size_t>(c) * triples
                                          : nullptr;
                        double* gx = x.rg ? x.grad.data() +
                                                (static_cast<std::size_t>(b) * p + c) * nb
                                          : nullptr;
                        double* gz = z.rg ? z.grad.data() +
                                                (static_cast<std::size_t>(b) * p + c) * nb
                                          : nullptr;
                        for (int e = 0; e < entries; ++e) {
                            const int t = plan.tidx[static_cast<std::size_t>(e)];
                            const double s = plan.sgn[static_cast<std::size_t>(e)];
                            const double go = gy[e >> n.shape.dim];
                            if (go == 0.0) continue;
                            const int A = plan.A[static_cast<std::size_t>(e)];
                            const int B = plan.B[static_cast<std::size_t>(e)];
                            if (gw) gw[t] += go * s * xv[A] * zv[B];
                            if (gx) gx[A] += go * s * wc[t] * zv[B];
                            if (gz) gz[B] += go * s * wc[t] * xv[A];
                        }
                    }
                }
            }
            break;
        }
        case kGradeScale: {
            Node& x = inode(0);
            Node& w = inode(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off =
                        (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    const std::size_t woff = static_cast<std::size_t>(c) * g1;
                    for (int k = 0; k < nb; ++k) {
                        const int gk = grades[static_cast<std::size_t>(k)];
                        if (x.rg) x.grad[off + k] += w.val[woff + gk] * g[off + k];
                        if (w.rg) w.grad[woff + gk] += x.val[off + k] * g[off + k];
                    }
                }
            }
            break;
        }
        case kGradeMask: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(n.shape.batch) * n.shape.channels;
            for (std::size_t c = 0; c < cells; ++c) {
                for (int k = 0; k < nb; ++k) {
                    if (grades[static_cast<std::size_t>(k)] == n.i0) {
                        x.grad[c * nb + k] += g[c * nb + k];
                    }
                }
            }
            break;
        }
        case kNormalize: {
            Node& x = inode(0);
            Node& phi = inode(1);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off =
                        (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    for (int m = 0; m < g1; ++m) {
                        double qm = 0.0, dot = 0.0;
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                qm += x.val[off + k] * x.val[off + k];
                                dot += g[off + k] * x.val[off + k];
                            }
                        }
                        const double pv = phi.val[static_cast<std::size_t>(c) * g1 + m];
                        const double s = sigmoid(pv);
                        const double denom = s * (qm - 1.0) + 1.0;
                        const double inv = 1.0 / denom;
                        const double inv2 = inv * inv;
                        if (x.rg) {
                            for (int k = 0; k < nb; ++k) {
                                if (grades[static_cast<std::size_t>(k)] == m) {
                                    x.grad[off + k] +=
                                        g[off + k] * inv -
                                        dot * s * 2.0 * x.val[off + k] * inv2;
                                }
                            }
                        }
                        if (phi.rg) {
                            phi.grad[static_cast<std::size_t>(c) * g1 + m] +=
                                -dot * s * (1.0 - s) * (qm - 1.0) * inv2;
                        }
                    }
                }
            }
            break;
        }
        case kGate: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const auto& grades = grade_lut(n.shape.dim);
            const int nb = n.shape.blades();
            const int g1 = n.shape.dim + 1;
            for (int b = 0; b < n.shape.batch; ++b) {
                for (int c = 0; c < n.shape.channels; ++c) {
                    const std::size_t off =
                        (static_cast<std::size_t>(b) * n.shape.channels + c) * nb;
                    if (x.val[off] > 0.0) x.grad[off] += g[off];
                    for (int m = 1; m < g1; ++m) {
                        double qm = 0.0, dot = 0.0;
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                qm += x.val[off + k] * x.val[off + k];
                                dot += g[off + k] * x.val[off + k];
                            }
                        }
                        const double gt = sigmoid(qm);
                        const double dgt = gt * (1.0 - gt);
                        for (int k = 0; k < nb; ++k) {
                            if (grades[static_cast<std::size_t>(k)] == m) {
                                x.grad[off + k] +=
                                    gt * g[off + k] + dot * dgt * 2.0 * x.val[off + k];
                            }
                        }
                    }
                }
            }
            break;
        }
        case kScalarNonlin: {
            if (!wants(0)) break;
            Node& x = inode(0);
            if (n.i0 == static_cast<int>(Nonlin::Relu)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x.val[i] > 0.0) x.grad[i] += g[i];
                }
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    x.grad[i] += n.val[i] * (1.0 - n.val[i]) * g[i];
                }
            }
            break;
        }
        case kDenseAffine: {
            Node& x = inode(0);
            Node& w = inode(1);
            Node& bias = inode(2);
            const int p = x.shape.channels;
            const int q = n.i0;
            for (int b = 0; b < n.shape.batch; ++b) {
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * p;
                const double* gr = g.data() + static_cast<std::size_t>(b) * q;
                for (int co = 0; co < q; ++co) {
                    const double go = gr[co];
                    if (go == 0.0) continue;
                    if (bias.rg) bias.grad[static_cast<std::size_t>(co)] += go;
                    const std::size_t woff = static_cast<std::size_t>(co) * p;
                    if (x.rg) {
                        double* gx = x.grad.data() + static_cast<std::size_t>(b) * p;
                        const double* wr = w.val.data() + woff;
                        for (int ci = 0; ci < p; ++ci) gx[ci] += wr[ci] * go;
                    }
                    if (w.rg) {
                        double* gw = w.grad.data() + woff;
                        for (int ci = 0; ci < p; ++ci) gw[ci] += xr[ci] * go;
                    }
                }
            }
            break;
        }
        case kRowSumsq: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (int b = 0; b < n.shape.batch; ++b) {
                const double go = g[static_cast<std::size_t>(b)];
                if (go == 0.0) continue;
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * row;
                double* gx = x.grad.data() + static_cast<std::size_t>(b) * row;
                for (std::size_t i = 0; i < row; ++i) gx[i] += 2.0 * xr[i] * go;
            }
            break;
        }
        case kMulBroadcast: {
            Node& x = inode(0);
            Node& s = inode(1);
            const std::size_t row = static_cast<std::size_t>(x.shape.channels) * x.shape.blades();
            for (int b = 0; b < n.shape.batch; ++b) {
                const double sv = s.val[static_cast<std::size_t>(b)];
                const double* xr = x.val.data() + static_cast<std::size_t>(b) * row;
                const double* gr = g.data() + static_cast<std::size_t>(b) * row;
                if (x.rg) {
                    double* gx = x.grad.data() + static_cast<std::size_t>(b) * row;
                    for (std::size_t i = 0; i < row; ++i) gx[i] += sv * gr[i];
                }
                if (s.rg) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < row; ++i) acc += xr[i] * gr[i];
                    s.grad[static_cast<std::size_t>(b)] += acc;
                }
            }
            break;
        }
        case kSumsqGrade: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const auto& grades = grade_lut(x.shape.dim);
            const int nb = x.shape.blades();
            const std::size_t cells = static_cast<std::size_t>(x.shape.batch) * x.shape.channels;
            const double go = g[0];
            for (std::size_t c = 0; c < cells; ++c) {
                for (int k = 0; k < nb; ++k) {
                    if (grades[static_cast<std::size_t>(k)] == n.i0) {
                        x.grad[c * nb + k] += 2.0 * x.val[c * nb + k] * go;
                    }
                }
            }
            break;
        }
        case kWeightedSum: {
            if (!wants(0)) break;
            Node& x = inode(0);
            const double go = g[0];
            for (std::size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += n.aux[i] * go;
            break;
        }
        default:
            throw ConfigError("tape: unknown op in backward");
    }
}

}  // namespace cge::ad
