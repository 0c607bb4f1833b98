#pragma once

// Synthetic geometric regression tasks and their file formats:
//  - charged-particle dynamics: softened Coulomb forces integrated with
//    velocity Verlet; inputs are the initial state, targets the final
//    positions
//  - 3D convex-hull volume: standard-normal point clouds labeled by the
//    exact hull volume (quickhull + centroid tetrahedron fan)
// Datasets are line-delimited JSON records plus a JSON manifest; generation
// is deterministic from (seed, config) with per-sample derived seeds.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cge/geograph.hpp"
#include "cge/model.hpp"

namespace cge {

struct NBodyConfig {
    int particles = 5;
    int steps = 1000;
    double dt = 1e-3;
    double softening = 1e-2;  // force softening scale; also the collision floor
    double pos_scale = 1.0;   // initial positions ~ N(0, pos_scale^2)
    double vel_scale = 0.5;   // initial velocities ~ N(0, vel_scale^2)
    double max_energy_drift = 1e-3;  // relative drift above this rejects the sample

    void validate() const;  // throws ConfigError
};

struct HullConfig {
    int nodes = 6;                // points per sample; >= 4 for a 3D hull
    double min_separation = 0.0;  // pairwise max-norm distance floor

    void validate() const;  // throws ConfigError
};

// one integration run plus the diagnostics the acceptance properties need
struct NBodyRun {
    std::vector<double> final_positions;  // particles * 3
    std::vector<double> final_velocities;
    double min_distance = 0.0;        // smallest pairwise distance seen at any step
    double energy_drift = 0.0;        // |E(T) - E(0)| / |E(0)|
    double momentum_drift = 0.0;      // max |total momentum(t) - momentum(0)| component
};

// integrate a given initial state; when `trajectory` is non-null it receives
// the positions after every step (steps entries)
NBodyRun integrate_nbody(const NBodyConfig& cfg, std::span<const double> positions,
                         std::span<const double> velocities, std::span<const double> charges,
                         std::vector<std::vector<double>>* trajectory = nullptr);

struct NBodySample {
    std::vector<double> positions;   // initial, particles * 3
    std::vector<double> velocities;  // initial
    std::vector<double> charges;     // +-1
    std::vector<double> target;      // final positions
    int attempts = 1;                // draws needed until accepted
};

// draw initial conditions from derive_seed(seed, index, attempt) and rerun
// until the trajectory keeps all pairs above the softening floor and the
// relative energy drift within bounds; throws NumericError when no draw
// within `max_attempts` is acceptable
NBodySample draw_nbody_sample(const NBodyConfig& cfg, std::uint64_t seed, std::uint64_t index,
                              int max_attempts = 1000);

// exact hull volume of an M x 3 point cloud (M >= 4): points are sorted
// lexicographically first, so permuting the input leaves the result bitwise
// identical; throws NumericError when the points are collinear/coplanar
double hull_volume_3d(std::span<const double> points);

struct HullSample {
    std::vector<double> positions;  // nodes * 3
    double target = 0.0;            // hull volume
    int attempts = 1;
};

HullSample draw_hull_sample(const HullConfig& cfg, std::uint64_t seed, std::uint64_t index,
                            int max_attempts = 1000);

struct DatasetSpec {
    std::string task;  // "nbody" | "hull3d"
    std::uint64_t seed = 0;
    int train = 0, val = 0, test = 0;  // per-split sample counts
    NBodyConfig nbody;
    HullConfig hull;

    void validate() const;  // throws ConfigError
    int total() const { return train + val + test; }
};

struct GenerationSummary {
    std::vector<std::string> split_paths;  // train, val, test
    std::string manifest_path;
    int rejected_draws = 0;  // total extra attempts across samples
};

// writes <prefix>_{train,val,test}.jsonl and <prefix>_manifest.json; record
// ids number samples consecutively across splits in generation order
GenerationSummary generate_dataset(const DatasetSpec& spec, const std::string& out_prefix);

// in-memory split ready for the models: complete graphs; charged-particle
// records carry velocities, charge node scalars, and charge-product edge
// attributes; hull records carry positions only
struct Dataset {
    std::string task;
    Head head = Head::Vector;
    std::vector<GeometricGraph> graphs;
    std::vector<std::vector<double>> targets;  // per graph
};

Dataset load_dataset(const std::string& jsonl_path, const std::string& task);

// convenience: reads <prefix>_manifest.json for the task name, then the
// requested split file ("train" | "val" | "test")
Dataset load_split(const std::string& prefix, const std::string& split);

}  // namespace cge
