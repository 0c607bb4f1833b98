#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cge/config.hpp"
#include "cge/datasets.hpp"
#include "cge/model.hpp"

namespace cge {

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
    std::uint64_t t = 0;    // completed steps

    void reset(std::size_t n);
};

// Decoupled weight decay (params *= 1 - lr*wd) applied before the moment
// update; beta1 = 0.9, beta2 = 0.999, eps = 1e-8, bias-corrected.
// Throws NumericError on a non-finite gradient so the caller can abort the
// step without corrupting the parameters.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double weight_decay);

// ---------------------------------------------------------------------------
// run configuration and model factory
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 16;
    int max_iters = 1000;
    std::uint64_t seed = 0;
    int patience = 50;       // evals without val improvement before stopping
    int eval_interval = 50;  // iterations between validation passes
    bool cosine = false;     // anneal lr to 0 over max_iters

    void validate() const;  // throws ConfigError
    static TrainConfig from_config(const KeyValueConfig& cfg);
};

// Builds a model from config keys. `model` selects cgegnn (default) | gnn |
// egnn; `task` (nbody | hull3d) fixes the input plumbing: nbody graphs carry
// velocities, one charge scalar per node, and one charge-product edge
// attribute with a vector head; hull3d graphs carry positions only with a
// scalar head. Remaining keys: features, layers, hidden, mlp_depth, and for
// cgegnn orders / k_hops / max_subsets, for egnn velocity_gate.
std::unique_ptr<GraphModel> build_model(const KeyValueConfig& cfg);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

// Binary container, all integers and floats little-endian:
//   bytes 0..3   magic "CGEG"
//   u32          format version (1)
//   u64 + bytes  config text (flat key = value, includes model and task)
//   u64          parameter count N
//   f64 * N      parameters, in ParamStore registration order
//   f64 * N      Adam first moments
//   f64 * N      Adam second moments
//   u64          Adam step counter
//   u64          training iteration the snapshot was taken at
//   u64 + bytes  RNG engine state (text)
struct Checkpoint {
    std::string config_text;
    std::vector<double> params;
    AdamState opt;
    std::uint64_t iteration = 0;
    std::string rng_state;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);  // IoError
Checkpoint load_checkpoint(const std::string& path);                 // IoError on bad container

// ---------------------------------------------------------------------------
// evaluation and the training loop
// ---------------------------------------------------------------------------

// Mean squared error of the model's predictions over every target entry of
// the dataset (node coordinates for vector heads, one value per graph for
// scalar heads), computed from predictions rather than the training loss
// node. Batches are processed in file order.
double evaluate_mse(const GraphModel& model, const Dataset& ds, int batch_size);

struct MetricsRow {
    std::uint64_t iter = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
    double wall_ms = 0.0;
};

// header "iter,train_loss,val_mse,wall_ms"
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
    Checkpoint best;  // snapshot at the lowest validation MSE seen
    double best_val_mse = 0.0;
    std::uint64_t best_iter = 0;
    std::vector<MetricsRow> history;  // one row per validation pass
    bool aborted = false;             // non-finite training loss encountered
};

// Initializes the model from cfg.seed, runs mini-batch Adam with periodic
// validation, and returns the best-on-validation snapshot. config_text is
// stored verbatim in every checkpoint so eval can rebuild the model.
TrainResult train(GraphModel& model, const Dataset& train_ds, const Dataset& val_ds,
                  const TrainConfig& cfg, const std::string& config_text);

}  // namespace cge
