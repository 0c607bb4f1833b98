#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cge/datasets.hpp"
#include "cge/errors.hpp"
#include "cge/group_action.hpp"
#include "cge/rng.hpp"

using cge::DatasetSpec;
using cge::HullConfig;
using cge::NBodyConfig;
using cge::Rng;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// independent point-in-hull test: a point is outside iff some supporting
// plane of the point set strictly separates it
struct SupportingPlanes {
    std::vector<std::array<double, 4>> planes;  // n, offset with inside <= 0

    explicit SupportingPlanes(const std::vector<double>& pts) {
        const int m = static_cast<int>(pts.size() / 3);
        auto at = [&](int i, int c) { return pts[static_cast<std::size_t>(i) * 3 + c]; };
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                for (int k = j + 1; k < m; ++k) {
                    const double ux = at(j, 0) - at(i, 0), uy = at(j, 1) - at(i, 1),
                                 uz = at(j, 2) - at(i, 2);
                    const double vx = at(k, 0) - at(i, 0), vy = at(k, 1) - at(i, 1),
                                 vz = at(k, 2) - at(i, 2);
                    double nx = uy * vz - uz * vy, ny = uz * vx - ux * vz, nz = ux * vy - uy * vx;
                    const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
                    if (nn < 1e-12) continue;
                    double lo = 0.0, hi = 0.0;
                    for (int l = 0; l < m; ++l) {
                        const double s = nx * (at(l, 0) - at(i, 0)) + ny * (at(l, 1) - at(i, 1)) +
                                         nz * (at(l, 2) - at(i, 2));
                        lo = std::min(lo, s);
                        hi = std::max(hi, s);
                    }
                    const double tol = 1e-9 * nn;
                    if (hi <= tol) {  // all points on the negative side
                        planes.push_back({nx, ny, nz,
                                          nx * at(i, 0) + ny * at(i, 1) + nz * at(i, 2)});
                    } else if (lo >= -tol) {
                        planes.push_back({-nx, -ny, -nz,
                                          -(nx * at(i, 0) + ny * at(i, 1) + nz * at(i, 2))});
                    }
                }
            }
        }
    }

    bool contains(double x, double y, double z) const {
        for (const auto& p : planes) {
            if (p[0] * x + p[1] * y + p[2] * z - p[3] > 1e-9) return false;
        }
        return true;
    }
};

}  // namespace

TEST_CASE("configuration invariants are enforced") {
    NBodyConfig nb;
    CHECK_NOTHROW(nb.validate());
    nb.steps = 0;
    CHECK_THROWS_AS(nb.validate(), cge::ConfigError);
    nb = NBodyConfig{};
    nb.dt = 0.0;
    CHECK_THROWS_AS(nb.validate(), cge::ConfigError);
    HullConfig h;
    CHECK_NOTHROW(h.validate());
    h.nodes = 3;
    CHECK_THROWS_AS(h.validate(), cge::ConfigError);
    h = HullConfig{};
    h.min_separation = -1.0;
    CHECK_THROWS_AS(h.validate(), cge::ConfigError);
    DatasetSpec spec;
    spec.task = "tetris";
    CHECK_THROWS_AS(spec.validate(), cge::ConfigError);
    spec.task = "hull3d";
    spec.train = 0;
    spec.val = 0;
    spec.test = 0;
    CHECK_THROWS_AS(spec.validate(), cge::ConfigError);
}

TEST_CASE("free particle moves exactly in a straight line") {
    // dt and velocity are powers of two, so every verlet update is exact and
    // the final position equals initial + v * steps * dt with no rounding
    NBodyConfig cfg;
    cfg.particles = 1;
    cfg.steps = 16;
    cfg.dt = 0.0009765625;  // 2^-10
    const std::vector<double> x0 = {0.25, -0.5, 1.0};
    const std::vector<double> v0 = {0.5, -0.25, 0.125};
    const std::vector<double> q = {1.0};
    const auto run = cge::integrate_nbody(cfg, x0, v0, q);
    for (int c = 0; c < 3; ++c) {
        CHECK(run.final_positions[static_cast<std::size_t>(c)] ==
              x0[static_cast<std::size_t>(c)] + v0[static_cast<std::size_t>(c)] * 16.0 * cfg.dt);
        CHECK(run.final_velocities[static_cast<std::size_t>(c)] == v0[static_cast<std::size_t>(c)]);
    }
    CHECK(run.momentum_drift == 0.0);
}

TEST_CASE("two like charges at rest repel monotonically") {
    NBodyConfig cfg;
    cfg.particles = 2;
    cfg.steps = 500;
    const std::vector<double> x0 = {-0.25, 0.0, 0.0, 0.25, 0.0, 0.0};
    const std::vector<double> v0(6, 0.0);
    const std::vector<double> q = {1.0, 1.0};
    std::vector<std::vector<double>> traj;
    const auto run = cge::integrate_nbody(cfg, x0, v0, q, &traj);
    REQUIRE(traj.size() == 500);
    double prev = 0.5;
    for (const auto& frame : traj) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = frame[static_cast<std::size_t>(c)] - frame[static_cast<std::size_t>(3 + c)];
            d2 += d * d;
        }
        const double dist = std::sqrt(d2);
        CHECK(dist > prev);
        prev = dist;
    }
    CHECK(run.momentum_drift <= 1e-9);
}

TEST_CASE("accepted samples conserve momentum and energy within bounds") {
    NBodyConfig cfg;  // defaults: 5 particles, 1000 steps, dt 1e-3
    for (std::uint64_t idx = 0; idx < 6; ++idx) {
        const auto s = cge::draw_nbody_sample(cfg, 2024, idx);
        const auto run = cge::integrate_nbody(cfg, s.positions, s.velocities, s.charges);
        CHECK(run.momentum_drift <= 1e-9);
        CHECK(run.energy_drift <= 1e-3);
        CHECK(run.min_distance >= cfg.softening);
        REQUIRE(s.target.size() == 15);
        for (std::size_t i = 0; i < 15; ++i) CHECK(s.target[i] == run.final_positions[i]);
        for (double c : s.charges) CHECK(std::abs(c) == 1.0);
    }
}

TEST_CASE("the collision floor rejects and redraws deterministically") {
    NBodyConfig cfg;
    cfg.particles = 5;
    cfg.steps = 10;
    cfg.softening = 0.8;  // large floor: N(0,1) clouds often violate it
    int retried = 0;
    for (std::uint64_t idx = 0; idx < 8; ++idx) {
        const auto s = cge::draw_nbody_sample(cfg, 7, idx);
        if (s.attempts > 1) ++retried;
        const auto run = cge::integrate_nbody(cfg, s.positions, s.velocities, s.charges);
        CHECK(run.min_distance >= cfg.softening);
        // identical draw is reproducible including the attempt count
        const auto again = cge::draw_nbody_sample(cfg, 7, idx);
        CHECK(again.attempts == s.attempts);
        CHECK(again.positions == s.positions);
        CHECK(again.target == s.target);
    }
    CHECK(retried > 0);
}

TEST_CASE("hull volume matches closed forms") {
    const std::vector<double> tetra = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK(cge::hull_volume_3d(tetra) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

    std::vector<double> cube;
    for (int i = 0; i < 8; ++i) {
        cube.push_back(i & 1 ? 1.0 : 0.0);
        cube.push_back(i & 2 ? 1.0 : 0.0);
        cube.push_back(i & 4 ? 1.0 : 0.0);
    }
    CHECK(cge::hull_volume_3d(cube) == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<double> octa = {1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1};
    CHECK(cge::hull_volume_3d(octa) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    // interior points change nothing
    std::vector<double> cube_plus = cube;
    cube_plus.insert(cube_plus.end(), {0.5, 0.5, 0.5});
    cube_plus.insert(cube_plus.end(), {0.25, 0.75, 0.5});
    CHECK(cge::hull_volume_3d(cube_plus) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hull volume rejects degenerate point sets") {
    const std::vector<double> three = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    CHECK_THROWS_AS(cge::hull_volume_3d(three), cge::ConfigError);
    const std::vector<double> coplanar = {0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.3, 0.4, 0};
    CHECK_THROWS_AS(cge::hull_volume_3d(coplanar), cge::NumericError);
    const std::vector<double> collinear = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
    CHECK_THROWS_AS(cge::hull_volume_3d(collinear), cge::NumericError);
    const std::vector<double> coincident(12, 0.5);
    CHECK_THROWS_AS(cge::hull_volume_3d(coincident), cge::NumericError);
    const std::vector<double> ragged(13, 0.1);
    CHECK_THROWS_AS(cge::hull_volume_3d(ragged), cge::ConfigError);
}

TEST_CASE("hull volume is permutation-exact and rigid-motion invariant") {
    Rng rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        const int m = 6 + static_cast<int>(rng.below(3));
        std::vector<double> pts(static_cast<std::size_t>(m) * 3);
        for (auto& v : pts) v = rng.normal();
        const double vol = cge::hull_volume_3d(pts);
        CHECK(vol > 0.0);

        // permute points: identical bits out
        std::vector<int> order(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
        rng.shuffle(order);
        std::vector<double> shuffled;
        for (int i : order) {
            for (int c = 0; c < 3; ++c) shuffled.push_back(pts[static_cast<std::size_t>(i) * 3 + c]);
        }
        CHECK(cge::hull_volume_3d(shuffled) == vol);

        // rotate + translate: equal to 1e-9 relative
        const auto Qm = cge::random_orthogonal(rng, 3);
        const cge::OrthogonalMap Q(3, Qm);
        const std::array<double, 3> shift = {rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> moved(pts.size());
        for (int i = 0; i < m; ++i) {
            std::span<const double> row(pts.data() + static_cast<std::size_t>(i) * 3, 3);
            const auto r = Q.apply_vector(row);
            for (int c = 0; c < 3; ++c) {
                moved[static_cast<std::size_t>(i) * 3 + c] = r[static_cast<std::size_t>(c)] + shift[static_cast<std::size_t>(c)];
            }
        }
        CHECK(cge::hull_volume_3d(moved) == doctest::Approx(vol).epsilon(1e-9));

        // homogeneity: scaling by 2 scales volume by 8
        std::vector<double> doubled(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) doubled[i] = 2.0 * pts[i];
        CHECK(cge::hull_volume_3d(doubled) == doctest::Approx(8.0 * vol).epsilon(1e-12));
    }
}

TEST_CASE("hull volume agrees with a Monte-Carlo estimate on 20 random hulls") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 6 + static_cast<int>(rng.below(3));
        std::vector<double> pts(static_cast<std::size_t>(m) * 3);
        for (auto& v : pts) v = rng.normal();
        const double vol = cge::hull_volume_3d(pts);

        std::array<double, 3> lo = {1e300, 1e300, 1e300};
        std::array<double, 3> hi = {-1e300, -1e300, -1e300};
        for (int i = 0; i < m; ++i) {
            for (int c = 0; c < 3; ++c) {
                lo[static_cast<std::size_t>(c)] = std::min(lo[static_cast<std::size_t>(c)],
                                                           pts[static_cast<std::size_t>(i) * 3 + c]);
                hi[static_cast<std::size_t>(c)] = std::max(hi[static_cast<std::size_t>(c)],
                                                           pts[static_cast<std::size_t>(i) * 3 + c]);
            }
        }
        const double box = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
        const SupportingPlanes hull(pts);
        const int samples = 1000000;
        int inside = 0;
        Rng mc(cge::derive_seed(99, static_cast<std::uint64_t>(trial)));
        for (int s = 0; s < samples; ++s) {
            const double x = mc.uniform(lo[0], hi[0]);
            const double y = mc.uniform(lo[1], hi[1]);
            const double z = mc.uniform(lo[2], hi[2]);
            if (hull.contains(x, y, z)) ++inside;
        }
        const double p = static_cast<double>(inside) / samples;
        const double estimate = box * p;
        const double se = box * std::sqrt(p * (1.0 - p) / samples);
        CHECK(std::abs(estimate - vol) <= 3.0 * se);
    }
}

TEST_CASE("hull samples respect the separation floor") {
    HullConfig cfg;
    cfg.nodes = 6;
    cfg.min_separation = 0.5;
    int retried = 0;
    for (std::uint64_t idx = 0; idx < 10; ++idx) {
        const auto s = cge::draw_hull_sample(cfg, 3, idx);
        if (s.attempts > 1) ++retried;
        for (int i = 0; i < 6; ++i) {
            for (int j = i + 1; j < 6; ++j) {
                double linf = 0.0;
                for (int c = 0; c < 3; ++c) {
                    linf = std::max(linf, std::abs(s.positions[static_cast<std::size_t>(i) * 3 + c] -
                                                   s.positions[static_cast<std::size_t>(j) * 3 + c]));
                }
                CHECK(linf >= 0.5);
            }
        }
        CHECK(s.target == cge::hull_volume_3d(s.positions));
    }
    CHECK(retried > 0);  // at this floor some draws must have been rejected
}

TEST_CASE("generation writes reproducible splits that load back faithfully") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "cge_ds_test").string();
    fs::remove_all(dir);

    SUBCASE("charged particles") {
        DatasetSpec spec;
        spec.task = "nbody";
        spec.seed = 42;
        spec.train = 3;
        spec.val = 2;
        spec.test = 2;
        spec.nbody.particles = 3;
        spec.nbody.steps = 50;
        const auto sum = cge::generate_dataset(spec, dir + "/nb");
        REQUIRE(sum.split_paths.size() == 3);
        const std::string first = slurp(sum.split_paths[0]) + slurp(sum.split_paths[1]) +
                                  slurp(sum.split_paths[2]) + slurp(sum.manifest_path);
        // byte-identical regeneration
        const auto sum2 = cge::generate_dataset(spec, dir + "/nb");
        const std::string second = slurp(sum2.split_paths[0]) + slurp(sum2.split_paths[1]) +
                                   slurp(sum2.split_paths[2]) + slurp(sum2.manifest_path);
        CHECK(first == second);

        const auto train = cge::load_split(dir + "/nb", "train");
        CHECK(train.task == "nbody");
        CHECK(train.head == cge::Head::Vector);
        REQUIRE(train.graphs.size() == 3);
        const auto val = cge::load_split(dir + "/nb", "val");
        CHECK(val.graphs.size() == 2);
        const auto test = cge::load_split(dir + "/nb", "test");
        CHECK(test.graphs.size() == 2);

        // record id 0 is the first train sample: values round-trip bitwise
        const auto expect = cge::draw_nbody_sample(spec.nbody, spec.seed, 0);
        const auto& g = train.graphs[0];
        CHECK(g.num_nodes == 3);
        CHECK(g.positions == expect.positions);
        CHECK(g.velocities == expect.velocities);
        CHECK(g.scalars == expect.charges);
        CHECK(train.targets[0] == expect.target);
        REQUIRE(g.topology.edges.size() == 3);  // complete graph on 3 nodes
        CHECK(g.edge_attr_dim == 1);
        for (std::size_t e = 0; e < 3; ++e) {
            const auto [i, j] = g.topology.edges[e];
            CHECK(g.edge_attrs[e] == expect.charges[static_cast<std::size_t>(i)] *
                                         expect.charges[static_cast<std::size_t>(j)]);
        }
        // val split continues the id sequence (ids 3, 4)
        const auto expect_val = cge::draw_nbody_sample(spec.nbody, spec.seed, 3);
        CHECK(val.graphs[0].positions == expect_val.positions);
    }

    SUBCASE("hull volumes") {
        DatasetSpec spec;
        spec.task = "hull3d";
        spec.seed = 9;
        spec.train = 2;
        spec.val = 1;
        spec.test = 1;
        spec.hull.nodes = 6;
        const auto sum = cge::generate_dataset(spec, dir + "/hl");
        const auto train = cge::load_split(dir + "/hl", "train");
        CHECK(train.head == cge::Head::Scalar);
        REQUIRE(train.graphs.size() == 2);
        CHECK(train.graphs[0].num_nodes == 6);
        CHECK(train.graphs[0].velocities.empty());
        CHECK(train.graphs[0].num_scalars == 0);
        CHECK(train.graphs[0].edge_attr_dim == 0);
        REQUIRE(train.targets[0].size() == 1);
        CHECK(train.targets[0][0] == cge::hull_volume_3d(train.graphs[0].positions));
        // manifest carries the split ranges
        const std::string manifest = slurp(sum.manifest_path);
        CHECK(manifest.find("\"task\": \"hull3d\"") != std::string::npos);
        CHECK(manifest.find("\"splits\"") != std::string::npos);
    }

    SUBCASE("I/O failures carry path context") {
        CHECK_THROWS_AS(cge::load_split(dir + "/missing", "train"), cge::IoError);
        CHECK_THROWS_AS(cge::load_dataset(dir + "/nowhere.jsonl", "hull3d"), cge::IoError);
        CHECK_THROWS_AS(cge::load_dataset(dir + "/nowhere.jsonl", "tetris"), cge::ConfigError);
        CHECK_THROWS_AS(cge::load_split(dir + "/nb", "holdout"), cge::ConfigError);
    }

    fs::remove_all(dir);
}
