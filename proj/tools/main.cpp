// cgegnn: dataset generation, training, evaluation, property checks, and
// result aggregation for the equivariant graph network library.
//
// Exit codes: 0 success, 1 property/numeric failure, 2 usage or configuration
// error, 3 I/O error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cge/checks.hpp"
#include "cge/config.hpp"
#include "cge/datasets.hpp"
#include "cge/errors.hpp"
#include "cge/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitProperty = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

// env fallback for every --seed that the user leaves unset
bool env_seed(std::uint64_t& out) {
    const char* s = std::getenv("CGEGNN_SEED");
    if (!s || !*s) return false;
    try {
        cge::KeyValueConfig c;
        c.set("seed", s);
        out = c.get_u64("seed");
        return true;
    } catch (const cge::ConfigError&) {
        throw cge::ConfigError("CGEGNN_SEED must be a non-negative integer, got '" +
                               std::string(s) + "'");
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw cge::IoError("cannot create directory " + p.parent_path().string());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw cge::IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw cge::IoError("write failed for " + path);
}

// grouping label for result tables: architecture plus message orders
std::string model_label(const cge::KeyValueConfig& cfg) {
    const std::string kind = cfg.get_str("model", "cgegnn");
    if (kind != "cgegnn") return kind;
    std::string label = kind;
    for (int d : cfg.get_int_list("orders", {1})) label += "-" + std::to_string(d);
    return label;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
    std::string task;
    std::string out;
    int samples = 0;
    std::vector<int> splits;
    std::uint64_t seed = 0;
    bool seed_given = false;
    // nbody
    int particles = 5;
    int steps = 1000;
    double dt = 1e-3;
    double softening = 1e-2;
    // hull
    int nodes = 6;
    double min_separation = 0.0;
};

int run_gen(const GenArgs& a) {
    cge::DatasetSpec spec;
    spec.task = a.task;
    spec.seed = a.seed;
    if (!a.seed_given) env_seed(spec.seed);
    if (!a.splits.empty()) {
        if (a.splits.size() != 3) throw cge::ConfigError("--splits needs train,val,test");
        spec.train = a.splits[0];
        spec.val = a.splits[1];
        spec.test = a.splits[2];
    } else {
        if (a.samples < 1) throw cge::ConfigError("--samples must be >= 1 (or pass --splits)");
        spec.val = a.samples / 3;
        spec.test = a.samples / 3;
        spec.train = a.samples - spec.val - spec.test;
    }
    spec.nbody.particles = a.particles;
    spec.nbody.steps = a.steps;
    spec.nbody.dt = a.dt;
    spec.nbody.softening = a.softening;
    spec.hull.nodes = a.nodes;
    spec.hull.min_separation = a.min_separation;
    spec.validate();

    const auto sum = cge::generate_dataset(spec, a.out);
    std::cout << "gen task=" << spec.task << " out=" << a.out << " seed=" << spec.seed
              << " train=" << spec.train << " val=" << spec.val << " test=" << spec.test
              << " rejected=" << sum.rejected_draws << " manifest=" << sum.manifest_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::string data;
    std::string out;
    std::string metrics;
    cge::KeyValueConfig overrides;  // flags the user actually passed
};

int run_train(const TrainArgs& a) {
    cge::KeyValueConfig cfg;
    if (!a.config_path.empty()) cfg = cge::KeyValueConfig::from_file(a.config_path);
    for (const auto& [k, v] : a.overrides.items()) cfg.set(k, v);

    const std::string data = !a.data.empty() ? a.data : cfg.get_str("data", "");
    if (data.empty()) throw cge::ConfigError("--data prefix (or config key 'data') is required");
    cfg.set("data", data);

    const auto train_ds = cge::load_split(data, "train");
    const auto val_ds = cge::load_split(data, "val");
    if (cfg.has("task") && cfg.get_str("task") != train_ds.task) {
        throw cge::ConfigError("config task '" + cfg.get_str("task") +
                               "' does not match dataset task '" + train_ds.task + "'");
    }
    cfg.set("task", train_ds.task);
    if (!cfg.has("model")) cfg.set("model", "cgegnn");
    std::uint64_t seed = 0;
    if (!cfg.has("seed") && env_seed(seed)) cfg.set_u64("seed", seed);

    auto model = cge::build_model(cfg);
    const auto tc = cge::TrainConfig::from_config(cfg);
    const std::string config_text = cfg.serialize();

    const auto result = cge::train(*model, train_ds, val_ds, tc, config_text);
    cge::save_checkpoint(result.best, a.out);
    const std::string metrics_path = !a.metrics.empty() ? a.metrics : a.out + ".metrics.csv";
    write_text_file(metrics_path, cge::metrics_csv(result.history));

    // test error of the best-on-validation snapshot
    const auto test_ds = cge::load_split(data, "test");
    auto flat = model->params().flat();
    std::copy(result.best.params.begin(), result.best.params.end(), flat.begin());
    const double test_mse = cge::evaluate_mse(*model, test_ds, tc.batch_size);

    const std::string label = model_label(cfg);
    write_text_file(a.out + ".result.csv", "model,seed,test_mse\n" + label + "," +
                                               std::to_string(tc.seed) + "," + fmt(test_mse) + "\n");

    std::cout << "train model=" << label << " seed=" << tc.seed
              << " evals=" << result.history.size() << " best_iter=" << result.best_iter
              << " best_val_mse=" << fmt(result.best_val_mse) << " test_mse=" << fmt(test_mse)
              << " aborted=" << (result.aborted ? 1 : 0) << " ckpt=" << a.out
              << " metrics=" << metrics_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int run_eval(const std::string& ckpt_path, const std::string& data, const std::string& split,
             int batch_size) {
    const auto ckpt = cge::load_checkpoint(ckpt_path);
    const auto cfg = cge::KeyValueConfig::parse(ckpt.config_text);
    auto model = cge::build_model(cfg);
    if (ckpt.params.size() != model->params().total()) {
        throw cge::IoError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                           " parameters but the configured model needs " +
                           std::to_string(model->params().total()));
    }
    auto flat = model->params().flat();
    std::copy(ckpt.params.begin(), ckpt.params.end(), flat.begin());

    const std::string prefix = !data.empty() ? data : cfg.get_str("data", "");
    if (prefix.empty()) throw cge::ConfigError("--data prefix is required");
    const auto ds = cge::load_split(prefix, split);
    const double mse = cge::evaluate_mse(*model, ds, batch_size);
    std::cout << "eval ckpt=" << ckpt_path << " model=" << model_label(cfg) << " split=" << split
              << " count=" << ds.graphs.size() << " mse=" << fmt(mse) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct CheckArgs {
    std::string kind;
    int trials = -1;  // -1: per-kind default
    double tol = -1.0;
    double scalar_tol = 1e-8;
    int probes = 50;
    int K = 4, M = 3, d = 2;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_check(const CheckArgs& a) {
    std::uint64_t seed = a.seed;
    if (!a.seed_given) env_seed(seed);
    std::vector<cge::checks::CheckReport> reports;
    if (a.kind == "equivariance") {
        const int trials = a.trials > 0 ? a.trials : 100;
        const double tol = a.tol > 0 ? a.tol : 1e-6;
        reports.push_back(cge::checks::check_equivariance("cgegnn", trials, tol, a.scalar_tol, seed));
        reports.push_back(cge::checks::check_equivariance("egnn", trials, tol, a.scalar_tol, seed));
        reports.push_back(cge::checks::check_equivariance("gnn", trials, tol, a.scalar_tol, seed));
    } else if (a.kind == "grad") {
        const double tol = a.tol > 0 ? a.tol : 1e-4;
        const int probes = a.trials > 0 ? a.trials : a.probes;
        reports.push_back(cge::checks::check_gradients(probes, tol, seed));
    } else if (a.kind == "algebra") {
        const int trials = a.trials > 0 ? a.trials : 1000;
        const double tol = a.tol > 0 ? a.tol : 1e-12;
        reports.push_back(cge::checks::check_algebra(trials, 4, tol, seed));
    } else if (a.kind == "universality") {
        const int trials = a.trials > 0 ? a.trials : 100;
        reports.push_back(cge::checks::check_universality(a.K, a.d, a.M, trials, seed));
    } else if (a.kind == "neighborhoods") {
        const int trials = a.trials > 0 ? a.trials : 50;
        reports.push_back(cge::checks::check_neighborhoods(trials, seed));
    } else {
        throw cge::ConfigError(
            "check kind must be equivariance, grad, algebra, universality, or neighborhoods");
    }
    bool all_passed = true;
    for (const auto& r : reports) {
        std::cout << r.line() << "\n";
        all_passed = all_passed && r.passed;
    }
    return all_passed ? kExitOk : kExitProperty;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int run_report(const std::string& runs_dir, const std::string& out_csv) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(runs_dir)) throw cge::IoError(runs_dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(runs_dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 11 &&
            name.substr(name.size() - 11) == ".result.csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw cge::IoError("no *.result.csv files under " + runs_dir);

    std::map<std::string, std::vector<std::pair<std::uint64_t, double>>> groups;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw cge::IoError("cannot open " + f.string());
        std::string header, row;
        if (!std::getline(in, header) || header != "model,seed,test_mse" || !std::getline(in, row)) {
            throw cge::IoError(f.string() + ": expected 'model,seed,test_mse' header and one row");
        }
        const std::size_t c1 = row.find(',');
        const std::size_t c2 = row.find(',', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw cge::IoError(f.string() + ": malformed result row '" + row + "'");
        }
        try {
            cge::KeyValueConfig p;
            p.set("seed", row.substr(c1 + 1, c2 - c1 - 1));
            p.set("mse", row.substr(c2 + 1));
            groups[row.substr(0, c1)].emplace_back(p.get_u64("seed"), p.get_double("mse"));
        } catch (const cge::ConfigError& e) {
            throw cge::IoError(f.string() + ": " + e.what());
        }
    }

    std::ostringstream table;
    table << "model,mean_mse,std_mse,seeds\n";
    for (auto& [label, runs] : groups) {
        std::sort(runs.begin(), runs.end());
        double mean = 0.0;
        for (const auto& [s, m] : runs) mean += m;
        mean /= static_cast<double>(runs.size());
        double var = 0.0;
        for (const auto& [s, m] : runs) var += (m - mean) * (m - mean);
        const double stdev = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
        std::string seeds;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (i) seeds += ';';
            seeds += std::to_string(runs[i].first);
        }
        table << label << ',' << fmt(mean) << ',' << fmt(stdev) << ',' << seeds << '\n';
    }

    if (!out_csv.empty()) {
        write_text_file(out_csv, table.str());
    } else {
        std::cout << table.str();
    }
    std::cout << "report runs=" << files.size() << " models=" << groups.size()
              << (out_csv.empty() ? "" : " out=" + out_csv) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"equivariant graph network toolkit: datasets, training, property checks"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker cap (execution is currently single-threaded)")
        ->default_val(1)
        ->check(CLI::PositiveNumber);

    // gen ---------------------------------------------------------------
    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "generate a dataset (3 split files + manifest)");
    cmd_gen->add_option("task", gen.task, "nbody | hull3d")->required();
    cmd_gen->add_option("--out", gen.out, "output path prefix")->required();
    cmd_gen->add_option("--samples", gen.samples, "total sample count, split into thirds");
    cmd_gen->add_option("--splits", gen.splits, "explicit train,val,test counts")->delimiter(',');
    auto* gen_seed = cmd_gen->add_option("--seed", gen.seed, "generation seed");
    cmd_gen->add_option("--particles", gen.particles, "bodies per system (nbody)");
    cmd_gen->add_option("--steps", gen.steps, "integration steps (nbody)");
    cmd_gen->add_option("--dt", gen.dt, "integration step size (nbody)");
    cmd_gen->add_option("--softening", gen.softening, "force softening length (nbody)");
    cmd_gen->add_option("--nodes", gen.nodes, "points per cloud (hull3d)");
    cmd_gen->add_option("--min-separation", gen.min_separation, "pairwise floor (hull3d)");

    // train ---------------------------------------------------------------
    TrainArgs tr;
    std::string tr_model, tr_orders, tr_task;
    int tr_features = 0, tr_layers = 0, tr_hidden = -1, tr_mlp_depth = 0, tr_k_hops = 0;
    std::uint64_t tr_max_subsets = 0;
    double tr_lr = 0, tr_wd = -1;
    int tr_batch = 0, tr_iters = 0, tr_patience = 0, tr_eval_interval = 0;
    std::uint64_t tr_seed = 0;
    bool tr_cosine = false, tr_velocity_gate = false;
    auto* cmd_tr = app.add_subcommand("train", "train a model and keep the best-on-validation checkpoint");
    cmd_tr->add_option("--config", tr.config_path, "key = value config file (flags override)");
    cmd_tr->add_option("--data", tr.data, "dataset path prefix from gen");
    cmd_tr->add_option("--out", tr.out, "checkpoint output path")->required();
    cmd_tr->add_option("--metrics", tr.metrics, "metrics CSV path (default <out>.metrics.csv)");
    auto* o_model = cmd_tr->add_option("--model", tr_model, "cgegnn | gnn | egnn");
    auto* o_task = cmd_tr->add_option("--task", tr_task, "nbody | hull3d (checked against the data)");
    auto* o_orders = cmd_tr->add_option("--orders", tr_orders, "message orders, e.g. 1,2");
    auto* o_features = cmd_tr->add_option("--features", tr_features, "node feature channels");
    auto* o_layers = cmd_tr->add_option("--layers", tr_layers, "message-passing layers");
    auto* o_hidden = cmd_tr->add_option("--hidden", tr_hidden, "hidden width (0 = features)");
    auto* o_mlp_depth = cmd_tr->add_option("--mlp-depth", tr_mlp_depth, "blocks per multivector MLP");
    auto* o_k_hops = cmd_tr->add_option("--k-hops", tr_k_hops, "neighborhood hop radius");
    auto* o_max_subsets = cmd_tr->add_option("--max-subsets", tr_max_subsets, "subset cap per node (0 = all)");
    auto* o_velocity_gate = cmd_tr->add_flag("--velocity-gate,!--no-velocity-gate", tr_velocity_gate,
                                             "velocity update term (egnn)");
    auto* o_lr = cmd_tr->add_option("--lr", tr_lr, "learning rate");
    auto* o_wd = cmd_tr->add_option("--weight-decay", tr_wd, "decoupled weight decay");
    auto* o_batch = cmd_tr->add_option("--batch-size", tr_batch, "graphs per step");
    auto* o_iters = cmd_tr->add_option("--iters", tr_iters, "max training iterations");
    auto* o_patience = cmd_tr->add_option("--patience", tr_patience, "evals without improvement before stopping");
    auto* o_eval_interval = cmd_tr->add_option("--eval-interval", tr_eval_interval, "iterations between validations");
    auto* o_cosine = cmd_tr->add_flag("--cosine,!--no-cosine", tr_cosine, "cosine learning-rate schedule");
    auto* o_seed = cmd_tr->add_option("--seed", tr_seed, "training seed");

    // eval ---------------------------------------------------------------
    std::string ev_ckpt, ev_data, ev_split = "test";
    int ev_batch = 32;
    auto* cmd_ev = app.add_subcommand("eval", "MSE of a checkpoint on a dataset split");
    cmd_ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    cmd_ev->add_option("--data", ev_data, "dataset path prefix (default: the checkpoint's)");
    cmd_ev->add_option("--split", ev_split, "train | val | test")->default_val("test");
    cmd_ev->add_option("--batch-size", ev_batch, "evaluation batch size")->default_val(32);

    // check ---------------------------------------------------------------
    CheckArgs ck;
    auto* cmd_ck = app.add_subcommand("check", "run a property suite; exit 1 on violation");
    cmd_ck->add_option("kind", ck.kind, "equivariance | grad | algebra | universality | neighborhoods")
        ->required();
    cmd_ck->add_option("--trials", ck.trials, "trial count (per-kind default)");
    cmd_ck->add_option("--tol", ck.tol, "tolerance (per-kind default)");
    cmd_ck->add_option("--scalar-tol", ck.scalar_tol, "invariance tolerance for scalar heads");
    cmd_ck->add_option("--probes", ck.probes, "gradient probes per target");
    cmd_ck->add_option("--K", ck.K, "lattice resolution (universality)");
    cmd_ck->add_option("--M", ck.M, "points per set (universality)");
    cmd_ck->add_option("--d", ck.d, "point dimension (universality)");
    auto* ck_seed = cmd_ck->add_option("--seed", ck.seed, "suite seed");

    // report ---------------------------------------------------------------
    std::string rp_runs, rp_out;
    auto* cmd_rp = app.add_subcommand("report", "aggregate *.result.csv runs into a summary table");
    cmd_rp->add_option("--runs", rp_runs, "directory holding run results")->required();
    cmd_rp->add_option("--out", rp_out, "summary CSV path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*cmd_gen) {
            gen.seed_given = gen_seed->count() > 0;
            return run_gen(gen);
        }
        if (*cmd_tr) {
            if (o_model->count()) tr.overrides.set("model", tr_model);
            if (o_task->count()) tr.overrides.set("task", tr_task);
            if (o_orders->count()) tr.overrides.set("orders", tr_orders);
            if (o_features->count()) tr.overrides.set_int("features", tr_features);
            if (o_layers->count()) tr.overrides.set_int("layers", tr_layers);
            if (o_hidden->count()) tr.overrides.set_int("hidden", tr_hidden);
            if (o_mlp_depth->count()) tr.overrides.set_int("mlp_depth", tr_mlp_depth);
            if (o_k_hops->count()) tr.overrides.set_int("k_hops", tr_k_hops);
            if (o_max_subsets->count()) tr.overrides.set_u64("max_subsets", tr_max_subsets);
            if (o_velocity_gate->count()) tr.overrides.set_bool("velocity_gate", tr_velocity_gate);
            if (o_lr->count()) tr.overrides.set_double("lr", tr_lr);
            if (o_wd->count()) tr.overrides.set_double("weight_decay", tr_wd);
            if (o_batch->count()) tr.overrides.set_int("batch_size", tr_batch);
            if (o_iters->count()) tr.overrides.set_int("iters", tr_iters);
            if (o_patience->count()) tr.overrides.set_int("patience", tr_patience);
            if (o_eval_interval->count()) tr.overrides.set_int("eval_interval", tr_eval_interval);
            if (o_cosine->count()) tr.overrides.set_bool("cosine", tr_cosine);
            if (o_seed->count()) tr.overrides.set_u64("seed", tr_seed);
            return run_train(tr);
        }
        if (*cmd_ev) return run_eval(ev_ckpt, ev_data, ev_split, ev_batch);
        if (*cmd_ck) {
            ck.seed_given = ck_seed->count() > 0;
            return run_check(ck);
        }
        if (*cmd_rp) return run_report(rp_runs, rp_out);
    } catch (const cge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cge::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const cge::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitProperty;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProperty;
    }
    return kExitConfig;  // no subcommand dispatched
}
