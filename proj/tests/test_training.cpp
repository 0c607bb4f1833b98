#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "cge/baselines.hpp"
#include "cge/config.hpp"
#include "cge/datasets.hpp"
#include "cge/errors.hpp"
#include "cge/model.hpp"
#include "cge/rng.hpp"
#include "cge/training.hpp"

using cge::AdamState;
using cge::Checkpoint;
using cge::Dataset;
using cge::KeyValueConfig;
using cge::Rng;
using cge::TrainConfig;

namespace {

Dataset make_hull_dataset(int count, std::uint64_t seed) {
    cge::HullConfig cfg;
    cfg.nodes = 6;
    Dataset ds;
    ds.task = "hull3d";
    ds.head = cge::Head::Scalar;
    for (int i = 0; i < count; ++i) {
        const auto s = cge::draw_hull_sample(cfg, seed, static_cast<std::uint64_t>(i));
        cge::GeometricGraph g;
        g.num_nodes = cfg.nodes;
        g.space_dim = 3;
        g.positions = s.positions;
        g.topology = cge::Graph::complete(cfg.nodes);
        g.validate();
        ds.graphs.push_back(std::move(g));
        ds.targets.push_back({s.target});
    }
    return ds;
}

}  // namespace

TEST_CASE("adam leaves parameters alone when nothing pushes them") {
    std::vector<double> p = {1.5, -2.25, 0.75};
    const std::vector<double> snapshot = p;
    const std::vector<double> g(3, 0.0);
    AdamState st;
    st.reset(3);
    for (int k = 0; k < 5; ++k) cge::adam_step(p, g, st, 1e-3, 0.0);
    CHECK(p == snapshot);
    CHECK(st.t == 5);
}

TEST_CASE("adam's first step has magnitude lr for a unit gradient") {
    std::vector<double> p = {0.0, 0.0};
    const std::vector<double> g = {1.0, -1.0};
    AdamState st;
    st.reset(2);
    cge::adam_step(p, g, st, 1e-3, 0.0);
    CHECK(std::abs(p[0] + 1e-3) <= 1e-10);  // moved against the gradient
    CHECK(std::abs(p[1] - 1e-3) <= 1e-10);
}

TEST_CASE("decoupled weight decay shrinks before the update") {
    std::vector<double> p = {2.0};
    const std::vector<double> g = {0.0};
    AdamState st;
    st.reset(1);
    cge::adam_step(p, g, st, 0.5, 0.1);
    CHECK(p[0] == 2.0 * (1.0 - 0.5 * 0.1));  // zero gradient: only the decay acts
}

TEST_CASE("adam rejects non-finite gradients and size mismatches") {
    std::vector<double> p = {1.0};
    AdamState st;
    st.reset(1);
    const std::vector<double> bad = {std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(cge::adam_step(p, bad, st, 1e-3, 0.0), cge::NumericError);
    CHECK(p[0] == 1.0);  // aborted before touching parameters
    const std::vector<double> wrong = {1.0, 2.0};
    CHECK_THROWS_AS(cge::adam_step(p, wrong, st, 1e-3, 0.0), cge::ConfigError);
}

TEST_CASE("adam trajectories are bitwise reproducible") {
    Rng rng(11);
    std::vector<double> g0(7), p1(7), p2(7);
    for (auto& v : g0) v = rng.normal();
    for (auto& v : p1) v = rng.normal();
    p2 = p1;
    AdamState s1, s2;
    s1.reset(7);
    s2.reset(7);
    for (int k = 0; k < 20; ++k) {
        std::vector<double> g(7);
        for (std::size_t i = 0; i < 7; ++i) g[i] = g0[i] * (1.0 + 0.1 * k);
        cge::adam_step(p1, g, s1, 3e-3, 1e-2);
        cge::adam_step(p2, g, s2, 3e-3, 1e-2);
    }
    CHECK(p1 == p2);
    CHECK(s1.m == s2.m);
    CHECK(s1.v == s2.v);
}

TEST_CASE("key=value configs parse, override, and reject malformed input") {
    const std::string text =
        "# run settings\n"
        "lr = 0.001\n"
        "orders = 1,2\n"
        "model = cgegnn   # trailing comment\n"
        "cosine = true\n"
        "\n"
        "features=8\n";
    auto cfg = KeyValueConfig::parse(text);
    CHECK(cfg.get_double("lr") == 0.001);
    CHECK(cfg.get_int_list("orders") == std::vector<int>{1, 2});
    CHECK(cfg.get_str("model") == "cgegnn");
    CHECK(cfg.get_bool("cosine"));
    CHECK(cfg.get_int("features") == 8);
    CHECK(cfg.get_int("missing", 42) == 42);
    CHECK_FALSE(cfg.has("missing"));

    cfg.set("lr", "0.5");  // flag-style override replaces in place
    CHECK(cfg.get_double("lr") == 0.5);
    const auto reparsed = KeyValueConfig::parse(cfg.serialize());
    CHECK(reparsed.serialize() == cfg.serialize());

    CHECK_THROWS_AS(KeyValueConfig::parse("just words\n"), cge::ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), cge::ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("= 3\n"), cge::ConfigError);
    CHECK_THROWS_AS(cfg.get_double("model"), cge::ConfigError);
    CHECK_THROWS_AS(cfg.get_int("lr"), cge::ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("features"), cge::ConfigError);
    CHECK_THROWS_AS(cfg.get_str("nope"), cge::ConfigError);
    CHECK_THROWS_AS(cfg.get_int_list("model"), cge::ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::from_file("/nonexistent/cfg.txt"), cge::IoError);
}

TEST_CASE("the model factory wires task plumbing into each architecture") {
    KeyValueConfig cfg;
    cfg.set("task", "nbody");
    cfg.set("features", "6");
    cfg.set("layers", "2");
    cfg.set("orders", "1,2");
    auto m = cge::build_model(cfg);
    auto* cg = dynamic_cast<cge::CgeGnn*>(m.get());
    REQUIRE(cg != nullptr);
    CHECK(cg->config().num_features == 6);
    CHECK(cg->config().orders == std::vector<int>{1, 2});
    CHECK(cg->config().vector_features == 1);
    CHECK(cg->config().scalar_features == 1);
    CHECK(cg->config().edge_attr_dim == 1);
    CHECK(cg->config().head == cge::Head::Vector);

    KeyValueConfig hull;
    hull.set("task", "hull3d");
    hull.set("model", "gnn");
    auto g = cge::build_model(hull);
    auto* gnn = dynamic_cast<cge::GnnModel*>(g.get());
    REQUIRE(gnn != nullptr);
    CHECK(gnn->config().head == cge::Head::Scalar);
    CHECK(gnn->config().vector_features == 0);
    CHECK(gnn->config().edge_attr_dim == 0);

    KeyValueConfig eg;
    eg.set("task", "nbody");
    eg.set("model", "egnn");
    auto e = cge::build_model(eg);
    auto* egnn = dynamic_cast<cge::EgnnModel*>(e.get());
    REQUIRE(egnn != nullptr);
    CHECK(egnn->config().velocity_gate);  // defaults on for the dynamics task

    KeyValueConfig bad;
    bad.set("task", "nbody");
    bad.set("model", "transformer");
    CHECK_THROWS_AS(cge::build_model(bad), cge::ConfigError);
    KeyValueConfig badtask;
    badtask.set("task", "sudoku");
    CHECK_THROWS_AS(cge::build_model(badtask), cge::ConfigError);
    KeyValueConfig notask;
    CHECK_THROWS_AS(cge::build_model(notask), cge::ConfigError);
}

TEST_CASE("checkpoints round-trip bitwise and reject corrupt containers") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "cge_ckpt_test").string();
    fs::remove_all(dir);

    Rng rng(3);
    Checkpoint c;
    c.config_text = "model = cgegnn\ntask = hull3d\nfeatures = 4\n";
    c.params.resize(37);
    for (auto& v : c.params) v = rng.normal();
    c.params[0] = -0.0;
    c.params[1] = 5e-324;  // smallest denormal survives the trip
    c.opt.reset(37);
    for (auto& v : c.opt.m) v = rng.normal();
    for (auto& v : c.opt.v) v = std::abs(rng.normal());
    c.opt.t = 123;
    c.iteration = 456;
    std::ostringstream ss;
    ss << rng.engine();
    c.rng_state = ss.str();

    const std::string path = dir + "/nested/run.ckpt";  // parent dirs get created
    cge::save_checkpoint(c, path);
    const auto r = cge::load_checkpoint(path);
    CHECK(r.config_text == c.config_text);
    CHECK(r.params.size() == c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) {
        CHECK(std::bit_cast<std::uint64_t>(r.params[i]) == std::bit_cast<std::uint64_t>(c.params[i]));
    }
    CHECK(r.opt.m == c.opt.m);
    CHECK(r.opt.v == c.opt.v);
    CHECK(r.opt.t == 123);
    CHECK(r.iteration == 456);
    CHECK(r.rng_state == c.rng_state);

    // saving again produces identical bytes
    cge::save_checkpoint(r, dir + "/again.ckpt");
    std::ifstream f1(path, std::ios::binary), f2(dir + "/again.ckpt", std::ios::binary);
    std::ostringstream b1, b2;
    b1 << f1.rdbuf();
    b2 << f2.rdbuf();
    CHECK(b1.str() == b2.str());

    CHECK_THROWS_AS(cge::load_checkpoint(dir + "/missing.ckpt"), cge::IoError);
    {
        std::ofstream bad(dir + "/bad.ckpt", std::ios::binary);
        bad << "NOPE" << b1.str().substr(4);
    }
    CHECK_THROWS_AS(cge::load_checkpoint(dir + "/bad.ckpt"), cge::IoError);
    {
        const std::string whole = b1.str();
        std::ofstream trunc(dir + "/trunc.ckpt", std::ios::binary);
        trunc.write(whole.data(), static_cast<std::streamsize>(whole.size() / 2));
    }
    CHECK_THROWS_AS(cge::load_checkpoint(dir + "/trunc.ckpt"), cge::IoError);
    {
        std::ofstream extra(dir + "/extra.ckpt", std::ios::binary);
        extra << b1.str() << "x";
    }
    CHECK_THROWS_AS(cge::load_checkpoint(dir + "/extra.ckpt"), cge::IoError);

    fs::remove_all(dir);
}

TEST_CASE("evaluate_mse averages squared prediction error over every entry") {
    const auto ds = make_hull_dataset(7, 21);
    cge::ModelConfig mc;
    mc.space_dim = 3;
    mc.num_features = 2;
    mc.num_layers = 1;
    mc.mlp_depth = 1;
    mc.head = cge::Head::Scalar;
    cge::CgeGnn model(mc);  // params default to zero -> prediction is zero
    double expect = 0.0;
    for (const auto& t : ds.targets) expect += t[0] * t[0];
    expect /= 7.0;
    // batching must not change the answer
    CHECK(cge::evaluate_mse(model, ds, 7) == doctest::Approx(expect).epsilon(1e-15));
    CHECK(cge::evaluate_mse(model, ds, 3) == doctest::Approx(expect).epsilon(1e-15));
    CHECK(cge::evaluate_mse(model, ds, 1) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("training config validation and parsing") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.lr = -1.0;
    CHECK_THROWS_AS(t.validate(), cge::ConfigError);
    t = TrainConfig{};
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), cge::ConfigError);

    auto cfg = KeyValueConfig::parse("lr = 0.01\niters = 7\nseed = 9\ncosine = true\n");
    const auto parsed = TrainConfig::from_config(cfg);
    CHECK(parsed.lr == 0.01);
    CHECK(parsed.max_iters == 7);
    CHECK(parsed.seed == 9);
    CHECK(parsed.cosine);
    CHECK(parsed.patience == 50);  // defaults survive
}

TEST_CASE("zero learning rate keeps validation MSE frozen") {
    const auto ds = make_hull_dataset(6, 33);
    cge::ModelConfig mc;
    mc.space_dim = 3;
    mc.num_features = 2;
    mc.num_layers = 1;
    mc.mlp_depth = 1;
    mc.head = cge::Head::Scalar;
    cge::CgeGnn model(mc);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.weight_decay = 0.0;
    tc.batch_size = 6;
    tc.max_iters = 12;
    tc.eval_interval = 3;
    tc.seed = 4;
    const auto out = cge::train(model, ds, ds, tc, "task = hull3d\n");
    REQUIRE(out.history.size() == 4);
    for (const auto& row : out.history) CHECK(row.val_mse == out.history[0].val_mse);
    CHECK_FALSE(out.aborted);
}

TEST_CASE("patience stops training once validation stalls") {
    const auto ds = make_hull_dataset(4, 8);
    cge::ModelConfig mc;
    mc.space_dim = 3;
    mc.num_features = 2;
    mc.num_layers = 1;
    mc.mlp_depth = 1;
    mc.head = cge::Head::Scalar;
    cge::CgeGnn model(mc);
    TrainConfig tc;
    tc.lr = 0.0;  // val MSE can never improve after the first eval
    tc.batch_size = 4;
    tc.max_iters = 100;
    tc.eval_interval = 1;
    tc.patience = 3;
    const auto out = cge::train(model, ds, ds, tc, "task = hull3d\n");
    CHECK(out.history.size() == 4);  // first eval sets best, then 3 stalls
    CHECK(out.best_iter == 1);
}

TEST_CASE("diverging runs abort with the last good snapshot") {
    const auto ds = make_hull_dataset(4, 13);
    cge::ModelConfig mc;
    mc.space_dim = 3;
    mc.num_features = 2;
    mc.num_layers = 1;
    mc.mlp_depth = 1;
    mc.head = cge::Head::Scalar;
    cge::CgeGnn model(mc);
    TrainConfig tc;
    tc.lr = 1e22;  // guarantees overflow within a few steps
    tc.weight_decay = 0.0;
    tc.batch_size = 4;
    tc.max_iters = 50;
    tc.eval_interval = 50;
    const auto out = cge::train(model, ds, ds, tc, "task = hull3d\n");
    CHECK(out.aborted);
    CHECK(out.best.params.size() == model.params().total());
    for (double v : out.best.params) CHECK(std::isfinite(v));
}

TEST_CASE("identical seeds reproduce the run; different seeds do not") {
    const auto ds = make_hull_dataset(6, 55);
    auto run = [&](std::uint64_t seed) {
        cge::ModelConfig mc;
        mc.space_dim = 3;
        mc.num_features = 2;
        mc.num_layers = 1;
        mc.mlp_depth = 1;
        mc.head = cge::Head::Scalar;
        cge::CgeGnn model(mc);
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.batch_size = 3;
        tc.max_iters = 10;
        tc.eval_interval = 5;
        tc.seed = seed;
        return cge::train(model, ds, ds, tc, "task = hull3d\n");
    };
    const auto a = run(7);
    const auto b = run(7);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].iter == b.history[i].iter);
        CHECK(a.history[i].train_loss == b.history[i].train_loss);  // bitwise
        CHECK(a.history[i].val_mse == b.history[i].val_mse);
    }
    CHECK(a.best.params == b.best.params);
    CHECK(a.best.rng_state == b.best.rng_state);
    const auto c = run(8);
    CHECK(c.history[0].train_loss != a.history[0].train_loss);

    // the CSV serialization differs only in the wall-clock column
    std::istringstream csv_a(cge::metrics_csv(a.history)), csv_b(cge::metrics_csv(b.history));
    std::string la, lb;
    std::getline(csv_a, la);
    std::getline(csv_b, lb);
    CHECK(la == "iter,train_loss,val_mse,wall_ms");
    while (std::getline(csv_a, la) && std::getline(csv_b, lb)) {
        CHECK(la.substr(0, la.rfind(',')) == lb.substr(0, lb.rfind(',')));
    }
}

TEST_CASE("an 8-sample training set can be memorized") {
    const auto ds = make_hull_dataset(8, 99);
    cge::ModelConfig mc;
    mc.space_dim = 3;
    mc.num_features = 4;
    mc.num_layers = 1;
    mc.mlp_depth = 1;
    mc.head = cge::Head::Scalar;
    cge::CgeGnn model(mc);
    TrainConfig tc;
    tc.lr = 5e-3;
    tc.weight_decay = 0.0;
    tc.batch_size = 8;
    tc.max_iters = 1500;
    tc.eval_interval = 100;
    tc.patience = 100;
    tc.seed = 1;
    const auto out = cge::train(model, ds, ds, tc, "task = hull3d\n");
    // rewind to the best snapshot and measure the training error
    auto flat = model.params().flat();
    REQUIRE(out.best.params.size() == flat.size());
    std::copy(out.best.params.begin(), out.best.params.end(), flat.begin());
    const double mse = cge::evaluate_mse(model, ds, 8);
    CHECK(mse < 1e-3);
    CHECK(out.best_val_mse == doctest::Approx(mse).epsilon(1e-12));
}
