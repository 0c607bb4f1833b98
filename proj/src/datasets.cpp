#include "cge/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "json.hpp"

#include "cge/errors.hpp"
#include "cge/rng.hpp"

namespace cge {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

// pairwise accelerations for unit masses; accumulated antisymmetrically so
// the total momentum change per step is exactly zero up to rounding
void accumulate_forces(std::span<const double> x, std::span<const double> q, double softening,
                       std::vector<double>& acc, double& min_distance) {
    const int m = static_cast<int>(q.size());
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            double d[3];
            double r2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                d[c] = x[static_cast<std::size_t>(i) * 3 + c] - x[static_cast<std::size_t>(j) * 3 + c];
                r2 += d[c] * d[c];
            }
            min_distance = std::min(min_distance, std::sqrt(r2));
            const double soft = r2 + softening * softening;
            const double inv = q[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(j)] /
                               (soft * std::sqrt(soft));
            for (int c = 0; c < 3; ++c) {
                const double f = inv * d[c];
                acc[static_cast<std::size_t>(i) * 3 + c] += f;
                acc[static_cast<std::size_t>(j) * 3 + c] -= f;
            }
        }
    }
}

double total_energy(std::span<const double> x, std::span<const double> v,
                    std::span<const double> q, double softening) {
    const int m = static_cast<int>(q.size());
    double e = 0.0;
    for (int i = 0; i < m; ++i) {
        for (int c = 0; c < 3; ++c) {
            const double vi = v[static_cast<std::size_t>(i) * 3 + c];
            e += 0.5 * vi * vi;
        }
    }
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            double r2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = x[static_cast<std::size_t>(i) * 3 + c] - x[static_cast<std::size_t>(j) * 3 + c];
                r2 += d * d;
            }
            e += q[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(j)] /
                 std::sqrt(r2 + softening * softening);
        }
    }
    return e;
}

}  // namespace

void NBodyConfig::validate() const {
    if (particles < 1) throw ConfigError("particles must be >= 1");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(softening > 0.0)) throw ConfigError("softening must be > 0");
    if (!(pos_scale > 0.0) || !(vel_scale >= 0.0)) {
        throw ConfigError("initial scales must be positive");
    }
    if (!(max_energy_drift > 0.0)) throw ConfigError("max_energy_drift must be > 0");
}

void HullConfig::validate() const {
    if (nodes < 4) throw ConfigError("a 3D hull needs at least 4 points");
    if (min_separation < 0.0) throw ConfigError("min_separation must be >= 0");
}

NBodyRun integrate_nbody(const NBodyConfig& cfg, std::span<const double> positions,
                         std::span<const double> velocities, std::span<const double> charges,
                         std::vector<std::vector<double>>* trajectory) {
    cfg.validate();
    const std::size_t m = charges.size();
    if (positions.size() != m * 3 || velocities.size() != m * 3) {
        throw ConfigError("state arrays must be particles * 3 long");
    }
    std::vector<double> x(positions.begin(), positions.end());
    std::vector<double> v(velocities.begin(), velocities.end());
    std::vector<double> acc(m * 3), acc_next(m * 3);

    NBodyRun run;
    run.min_distance = std::numeric_limits<double>::infinity();
    if (m == 1) run.min_distance = 0.0;  // no pairs; field reported as 0

    Vec3 p0 = {0, 0, 0};
    for (std::size_t i = 0; i < m; ++i) {
        for (int c = 0; c < 3; ++c) p0[static_cast<std::size_t>(c)] += v[i * 3 + static_cast<std::size_t>(c)];
    }
    const double e0 = total_energy(x, v, charges, cfg.softening);

    accumulate_forces(x, charges, cfg.softening, acc, run.min_distance);
    const double dt = cfg.dt;
    for (int step = 0; step < cfg.steps; ++step) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += v[i] * dt + 0.5 * acc[i] * dt * dt;
        }
        accumulate_forces(x, charges, cfg.softening, acc_next, run.min_distance);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] += 0.5 * (acc[i] + acc_next[i]) * dt;
        }
        acc.swap(acc_next);
        Vec3 p = {0, 0, 0};
        for (std::size_t i = 0; i < m; ++i) {
            for (int c = 0; c < 3; ++c) p[static_cast<std::size_t>(c)] += v[i * 3 + static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < 3; ++c) {
            run.momentum_drift = std::max(run.momentum_drift,
                                          std::abs(p[static_cast<std::size_t>(c)] - p0[static_cast<std::size_t>(c)]));
        }
        if (trajectory != nullptr) trajectory->push_back(x);
    }
    const double e1 = total_energy(x, v, charges, cfg.softening);
    run.energy_drift = std::abs(e1 - e0) / std::max(std::abs(e0), 1e-300);
    run.final_positions = std::move(x);
    run.final_velocities = std::move(v);
    return run;
}

NBodySample draw_nbody_sample(const NBodyConfig& cfg, std::uint64_t seed, std::uint64_t index,
                              int max_attempts) {
    cfg.validate();
    const std::size_t m = static_cast<std::size_t>(cfg.particles);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, index, static_cast<std::uint64_t>(attempt)));
        NBodySample s;
        s.positions.resize(m * 3);
        for (auto& p : s.positions) p = rng.normal(0.0, cfg.pos_scale);
        s.velocities.resize(m * 3);
        for (auto& vv : s.velocities) vv = rng.normal(0.0, cfg.vel_scale);
        s.charges.resize(m);
        for (auto& q : s.charges) q = rng.below(2) == 0 ? -1.0 : 1.0;

        const NBodyRun run = integrate_nbody(cfg, s.positions, s.velocities, s.charges);
        const bool collided = m > 1 && run.min_distance < cfg.softening;
        const bool drifted = run.energy_drift > cfg.max_energy_drift;
        if (collided || drifted) {
            std::cerr << "nbody sample " << index << " attempt " << attempt << " rejected ("
                      << (collided ? "pair below softening floor" : "energy drift") << ")\n";
            continue;
        }
        s.target = run.final_positions;
        s.attempts = attempt + 1;
        return s;
    }
    throw NumericError("no acceptable trajectory after max_attempts draws");
}

// ---------------------------------------------------------------------------
// 3D convex hull volume (quickhull + centroid tetrahedron fan)
// ---------------------------------------------------------------------------

namespace {

struct HullFace {
    int a, b, c;
    Vec3 n;          // outward normal (not normalized)
    double offset;   // dot(n, vertex on face)
    bool alive = true;
    std::vector<int> outside;
};

double face_dist(const HullFace& f, const Vec3& p) { return dot3(f.n, p) - f.offset; }

HullFace make_face(const std::vector<Vec3>& pts, int a, int b, int c, const Vec3& inner) {
    HullFace f{a, b, c, {}, 0.0, true, {}};
    f.n = cross3(sub3(pts[static_cast<std::size_t>(b)], pts[static_cast<std::size_t>(a)]),
                 sub3(pts[static_cast<std::size_t>(c)], pts[static_cast<std::size_t>(a)]));
    f.offset = dot3(f.n, pts[static_cast<std::size_t>(a)]);
    if (face_dist(f, inner) > 0.0) {  // flip so the interior reference is below
        std::swap(f.b, f.c);
        f.n = {-f.n[0], -f.n[1], -f.n[2]};
        f.offset = -f.offset;
    }
    return f;
}

}  // namespace

double hull_volume_3d(std::span<const double> points) {
    if (points.size() % 3 != 0) throw ConfigError("points must be a flat M x 3 array");
    const int m = static_cast<int>(points.size() / 3);
    if (m < 4) throw ConfigError("a 3D hull needs at least 4 points");

    std::vector<Vec3> pts(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        pts[static_cast<std::size_t>(i)] = {points[static_cast<std::size_t>(i) * 3],
                                            points[static_cast<std::size_t>(i) * 3 + 1],
                                            points[static_cast<std::size_t>(i) * 3 + 2]};
    }
    // canonical order makes the result independent of input permutation,
    // bit for bit
    std::sort(pts.begin(), pts.end());

    double extent = 0.0;
    for (const auto& p : pts) {
        for (double c : p) extent = std::max(extent, std::abs(c));
    }
    const double tol = std::max(extent, 1.0) * 1e-10;

    // initial simplex: two far-apart points, then the point farthest from
    // their line, then the point farthest from that plane
    int i0 = 0, i1 = -1;
    double best = -1.0;
    for (int i = 1; i < m; ++i) {
        const double d = norm3(sub3(pts[static_cast<std::size_t>(i)], pts[0]));
        if (d > best) {
            best = d;
            i1 = i;
        }
    }
    if (best <= tol) throw NumericError("degenerate hull: points coincide");
    const Vec3 axis = sub3(pts[static_cast<std::size_t>(i1)], pts[0]);
    int i2 = -1;
    best = -1.0;
    for (int i = 0; i < m; ++i) {
        if (i == i0 || i == i1) continue;
        const double d = norm3(cross3(axis, sub3(pts[static_cast<std::size_t>(i)], pts[0])));
        if (d > best) {
            best = d;
            i2 = i;
        }
    }
    if (i2 < 0 || best <= tol * norm3(axis)) {
        throw NumericError("degenerate hull: points are collinear");
    }
    const Vec3 n0 = cross3(axis, sub3(pts[static_cast<std::size_t>(i2)], pts[0]));
    int i3 = -1;
    best = -1.0;
    for (int i = 0; i < m; ++i) {
        if (i == i0 || i == i1 || i == i2) continue;
        const double d = std::abs(dot3(n0, sub3(pts[static_cast<std::size_t>(i)], pts[0])));
        if (d > best) {
            best = d;
            i3 = i;
        }
    }
    if (i3 < 0 || best <= tol * norm3(n0)) {
        throw NumericError("degenerate hull: points are coplanar");
    }

    Vec3 inner = {0, 0, 0};
    for (int i : {i0, i1, i2, i3}) {
        for (int c = 0; c < 3; ++c) inner[static_cast<std::size_t>(c)] += 0.25 * pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }

    std::vector<HullFace> faces;
    faces.push_back(make_face(pts, i0, i1, i2, inner));
    faces.push_back(make_face(pts, i0, i1, i3, inner));
    faces.push_back(make_face(pts, i0, i2, i3, inner));
    faces.push_back(make_face(pts, i1, i2, i3, inner));

    auto assign_outside = [&](HullFace& f, const std::vector<int>& candidates) {
        for (int i : candidates) {
            if (i == f.a || i == f.b || i == f.c) continue;
            const double nn = norm3(f.n);
            if (face_dist(f, pts[static_cast<std::size_t>(i)]) > tol * nn) f.outside.push_back(i);
        }
    };
    {
        std::vector<int> all(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i;
        for (auto& f : faces) assign_outside(f, all);
    }

    for (;;) {
        // face with the farthest outside point
        int fi = -1, pi = -1;
        double far = -1.0;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (!faces[f].alive) continue;
            const double nn = norm3(faces[f].n);
            for (int i : faces[f].outside) {
                const double d = face_dist(faces[f], pts[static_cast<std::size_t>(i)]) / nn;
                if (d > far) {
                    far = d;
                    fi = static_cast<int>(f);
                    pi = i;
                }
            }
        }
        if (fi < 0) break;  // no outside points anywhere: hull complete

        const Vec3& apex = pts[static_cast<std::size_t>(pi)];
        std::vector<int> visible;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (faces[f].alive && face_dist(faces[f], apex) > tol * norm3(faces[f].n)) {
                visible.push_back(static_cast<int>(f));
            }
        }
        // horizon: directed edges of visible faces whose reverse edge is not
        // itself part of a visible face
        std::set<std::pair<int, int>> vis_edges;
        for (int f : visible) {
            const auto& fc = faces[static_cast<std::size_t>(f)];
            vis_edges.insert({fc.a, fc.b});
            vis_edges.insert({fc.b, fc.c});
            vis_edges.insert({fc.c, fc.a});
        }
        std::vector<std::pair<int, int>> horizon;
        for (const auto& e : vis_edges) {
            if (vis_edges.find({e.second, e.first}) == vis_edges.end()) horizon.push_back(e);
        }
        std::vector<int> orphans;
        for (int f : visible) {
            faces[static_cast<std::size_t>(f)].alive = false;
            for (int i : faces[static_cast<std::size_t>(f)].outside) {
                if (i != pi) orphans.push_back(i);
            }
            faces[static_cast<std::size_t>(f)].outside.clear();
        }
        std::sort(orphans.begin(), orphans.end());
        orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
        for (const auto& [u, w] : horizon) {
            HullFace nf = make_face(pts, u, w, pi, inner);
            assign_outside(nf, orphans);
            faces.push_back(std::move(nf));
        }
    }

    // centroid of the hull's vertices, then a signed tetrahedron fan
    std::set<int> verts;
    for (const auto& f : faces) {
        if (!f.alive) continue;
        verts.insert(f.a);
        verts.insert(f.b);
        verts.insert(f.c);
    }
    Vec3 centroid = {0, 0, 0};
    for (int i : verts) {
        for (int c = 0; c < 3; ++c) centroid[static_cast<std::size_t>(c)] += pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < 3; ++c) centroid[static_cast<std::size_t>(c)] /= static_cast<double>(verts.size());

    double vol = 0.0;
    for (const auto& f : faces) {
        if (!f.alive) continue;
        const Vec3 a = sub3(pts[static_cast<std::size_t>(f.a)], centroid);
        const Vec3 b = sub3(pts[static_cast<std::size_t>(f.b)], centroid);
        const Vec3 c = sub3(pts[static_cast<std::size_t>(f.c)], centroid);
        vol += dot3(a, cross3(b, c)) / 6.0;
    }
    if (!(vol > 0.0)) throw NumericError("degenerate hull: nonpositive volume");
    return vol;
}

HullSample draw_hull_sample(const HullConfig& cfg, std::uint64_t seed, std::uint64_t index,
                            int max_attempts) {
    cfg.validate();
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, index, static_cast<std::uint64_t>(attempt)));
        HullSample s;
        s.positions.resize(static_cast<std::size_t>(cfg.nodes) * 3);
        for (auto& p : s.positions) p = rng.normal();

        bool ok = true;
        for (int i = 0; ok && i < cfg.nodes; ++i) {
            for (int j = i + 1; ok && j < cfg.nodes; ++j) {
                double linf = 0.0;
                for (int c = 0; c < 3; ++c) {
                    linf = std::max(linf, std::abs(s.positions[static_cast<std::size_t>(i) * 3 + c] -
                                                   s.positions[static_cast<std::size_t>(j) * 3 + c]));
                }
                ok = linf >= cfg.min_separation;
            }
        }
        if (!ok) {
            std::cerr << "hull sample " << index << " attempt " << attempt
                      << " rejected (separation)\n";
            continue;
        }
        try {
            s.target = hull_volume_3d(s.positions);
        } catch (const NumericError&) {
            std::cerr << "hull sample " << index << " attempt " << attempt
                      << " rejected (degenerate)\n";
            continue;
        }
        s.attempts = attempt + 1;
        return s;
    }
    throw NumericError("no acceptable point set after max_attempts draws");
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

void DatasetSpec::validate() const {
    if (task != "nbody" && task != "hull3d") {
        throw ConfigError("task must be nbody or hull3d");
    }
    if (train < 0 || val < 0 || test < 0 || total() < 1) {
        throw ConfigError("split sizes must be nonnegative and sum to >= 1");
    }
    if (task == "nbody") {
        nbody.validate();
    } else {
        hull.validate();
    }
}

GenerationSummary generate_dataset(const DatasetSpec& spec, const std::string& out_prefix) {
    spec.validate();
    namespace fs = std::filesystem;
    const fs::path prefix(out_prefix);
    if (prefix.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(prefix.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + prefix.parent_path().string());
    }

    GenerationSummary summary;
    const std::array<std::pair<const char*, int>, 3> splits = {
        std::make_pair("train", spec.train), std::make_pair("val", spec.val),
        std::make_pair("test", spec.test)};
    std::uint64_t id = 0;
    for (const auto& [name, count] : splits) {
        const std::string path = out_prefix + std::string("_") + name + ".jsonl";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (int k = 0; k < count; ++k, ++id) {
            nlohmann::json rec;
            if (spec.task == "nbody") {
                const NBodySample s = draw_nbody_sample(spec.nbody, spec.seed, id);
                summary.rejected_draws += s.attempts - 1;
                rec["charges"] = s.charges;
                rec["id"] = id;
                rec["positions"] = s.positions;
                rec["target"] = s.target;
                rec["velocities"] = s.velocities;
            } else {
                const HullSample s = draw_hull_sample(spec.hull, spec.seed, id);
                summary.rejected_draws += s.attempts - 1;
                rec["id"] = id;
                rec["positions"] = s.positions;
                rec["target"] = s.target;
            }
            out << rec.dump() << '\n';
            if (!out) throw IoError("write failure on " + path);
        }
        summary.split_paths.push_back(path);
    }

    nlohmann::json manifest;
    manifest["task"] = spec.task;
    manifest["seed"] = spec.seed;
    manifest["count"] = spec.total();
    if (spec.task == "nbody") {
        manifest["config"] = {{"dt", spec.nbody.dt},
                              {"max_energy_drift", spec.nbody.max_energy_drift},
                              {"particles", spec.nbody.particles},
                              {"pos_scale", spec.nbody.pos_scale},
                              {"softening", spec.nbody.softening},
                              {"steps", spec.nbody.steps},
                              {"vel_scale", spec.nbody.vel_scale}};
    } else {
        manifest["config"] = {{"min_separation", spec.hull.min_separation},
                              {"nodes", spec.hull.nodes}};
    }
    manifest["splits"] = {{"train", {0, spec.train}},
                          {"val", {spec.train, spec.train + spec.val}},
                          {"test", {spec.train + spec.val, spec.total()}}};
    summary.manifest_path = out_prefix + "_manifest.json";
    std::ofstream mf(summary.manifest_path, std::ios::binary);
    if (!mf) throw IoError("cannot open " + summary.manifest_path + " for writing");
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("write failure on " + summary.manifest_path);
    return summary;
}

Dataset load_dataset(const std::string& jsonl_path, const std::string& task) {
    if (task != "nbody" && task != "hull3d") {
        throw ConfigError("task must be nbody or hull3d");
    }
    std::ifstream in(jsonl_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + jsonl_path);
    Dataset ds;
    ds.task = task;
    ds.head = task == "nbody" ? Head::Vector : Head::Scalar;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(jsonl_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            GeometricGraph g;
            g.space_dim = 3;
            g.positions = rec.at("positions").get<std::vector<double>>();
            if (g.positions.size() % 3 != 0) {
                throw ConfigError("positions length not divisible by 3");
            }
            g.num_nodes = static_cast<int>(g.positions.size() / 3);
            g.topology = Graph::complete(g.num_nodes);
            std::vector<double> target;
            if (task == "nbody") {
                g.velocities = rec.at("velocities").get<std::vector<double>>();
                const auto charges = rec.at("charges").get<std::vector<double>>();
                if (static_cast<int>(charges.size()) != g.num_nodes) {
                    throw ConfigError("charges length does not match node count");
                }
                g.num_scalars = 1;
                g.scalars = charges;
                g.edge_attr_dim = 1;
                for (const auto& [i, j] : g.topology.edges) {
                    g.edge_attrs.push_back(charges[static_cast<std::size_t>(i)] *
                                           charges[static_cast<std::size_t>(j)]);
                }
                target = rec.at("target").get<std::vector<double>>();
            } else {
                target = {rec.at("target").get<double>()};
            }
            g.validate();
            ds.graphs.push_back(std::move(g));
            ds.targets.push_back(std::move(target));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(jsonl_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (ds.graphs.empty()) throw IoError(jsonl_path + ": no records");
    return ds;
}

Dataset load_split(const std::string& prefix, const std::string& split) {
    if (split != "train" && split != "val" && split != "test") {
        throw ConfigError("split must be train, val, or test");
    }
    const std::string mpath = prefix + "_manifest.json";
    std::ifstream mf(mpath, std::ios::binary);
    if (!mf) throw IoError("cannot open " + mpath);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(mpath + ": " + e.what());
    }
    std::string task;
    try {
        task = manifest.at("task").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(mpath + ": " + e.what());
    }
    return load_dataset(prefix + "_" + split + ".jsonl", task);
}

}  // namespace cge
