#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rftwin/calibrate.hpp"
#include "rftwin/channel.hpp"
#include "rftwin/config.hpp"
#include "rftwin/fingerprint.hpp"
#include "rftwin/geo.hpp"
#include "rftwin/measurement.hpp"
#include "rftwin/pf.hpp"
#include "rftwin/vehicle.hpp"

namespace rftwin::harness {

struct EnvironmentSpec {
    std::string tag;  // "DT" | "RW-surrogate"
    channel::ChannelParams channel;
};

/// Scenario 1: develop DT, test DT. 2: develop DT, test RW-surrogate.
/// 3: develop DT + calibration on RW logs, test RW-surrogate.
struct ScenarioSpec {
    int id = 1;
    EnvironmentSpec develop_env;
    EnvironmentSpec test_env;
    bool calibrated = false;
};

struct TrialSpec {
    int id = 1;
    geo::GeoPosition ugv_truth;
    bool in_flight_area = true;  // trials 1-2 true, trial 3 false
};

struct TrialResult {
    std::string estimator;  // "pf" | "cnn"
    int scenario = 0;
    int trial = 0;
    double error_m = 0.0;  // horizontal distance truth -> estimate
    double runtime_s = 0.0;
    std::uint64_t seed = 0;  // derived per-run seed
};

/// Resolved experiment configuration; defaults match the documented flat
/// config schema and every field can be overridden from a config file.
struct HarnessConfig {
    geo::GeoPosition field_origin{35.0, -78.0, 0.0};
    geo::Rect aoi{0.0, 0.0, 400.0, 400.0};
    geo::Rect flight_area{50.0, 50.0, 350.0, 350.0};
    double flight_altitude_m = 30.0;
    double lane_spacing_m = 40.0;
    double speed_mps = 5.0;
    double rate_hz = 2.0;
    double ugv_height_m = 1.0;
    std::string trajectory_file;  // empty = default lawnmower plan

    channel::ChannelParams dt_channel;
    channel::ChannelParams rw_channel;

    pf::PfConfig pf_cfg;
    fingerprint::TrainConfig train_cfg;
    int grid_rows = 6;
    int grid_cols = 6;
    int image_h = 32;
    int image_w = 32;
    int dataset_size = 400;
    int calib_log_count = 6;

    std::vector<TrialSpec> trials;
    std::vector<int> scenarios = {1, 2, 3};
    std::vector<std::string> estimators = {"pf", "cnn"};
    int n_seeds = 20;
    int threads = 0;  // 0 = hardware concurrency
    bool write_logs = true;

    static HarnessConfig defaults();
    /// defaults() overridden by the map; unknown keys are rejected.
    static HarnessConfig from_config(const config::ConfigMap& map);
    config::ConfigMap to_config() const;

    geo::LocalFrame frame() const { return {field_origin}; }
    fingerprint::AoiGrid grid() const { return {aoi, grid_rows, grid_cols}; }
    vehicle::Trajectory mission() const;
    ScenarioSpec scenario(int id) const;
    const TrialSpec& trial(int id) const;
    void validate() const;
};

/// Seed-derivation tags: every randomized stage hashes
/// (root_seed, tag, scenario, [trial], seed_index, ...) so reruns and cached
/// intermediates agree bit-for-bit.
enum SeedTag : std::uint64_t {
    kSeedTestLog = 1,
    kSeedPfRun = 2,
    kSeedCnnTrain = 3,
    kSeedDataset = 4,
    kSeedCalib = 5,
};

/// Calibration pass for scenario 3: RW-surrogate logs at seeded random
/// truths, fitted with fit_log_distance.
calibrate::CalibrationReport calibrate_from_surrogate(const HarnessConfig& cfg,
                                                      std::uint64_t root_seed,
                                                      int seed_index);

measurement::MeasurementLog make_test_log(const HarnessConfig& cfg, const ScenarioSpec& scenario,
                                          const TrialSpec& trial, std::uint64_t root_seed,
                                          int seed_index);

/// Simulated training set: UGV placed uniformly in the AoI per image, labels
/// from the AoI grid, flights in the (possibly calibrated) develop channel.
fingerprint::Dataset make_training_dataset(const HarnessConfig& cfg,
                                           const channel::ChannelParams& develop_channel,
                                           std::uint64_t root_seed, int scenario_id,
                                           int seed_index);

/// Train the Finger-CNN for one (scenario, seed); scenario 3 first calibrates.
std::pair<nn::CnnModel, fingerprint::TrainMetrics> train_cnn(const HarnessConfig& cfg,
                                                             std::uint64_t root_seed,
                                                             int scenario_id, int seed_index);

/// One estimator x scenario x trial cell, repeated over seed indices
/// [0, n_seeds). Per-seed failures are reported but don't discard the rest.
std::vector<TrialResult> run_trial(const HarnessConfig& cfg, const std::string& estimator,
                                   int scenario_id, int trial_id, std::uint64_t root_seed,
                                   int n_seeds);

struct MatrixCell {
    std::string estimator;
    int scenario = 0;
    int trial = 0;
    double median_error_m = 0.0;
    double iqr_m = 0.0;
    int n_seeds = 0;
    std::vector<double> errors_m;  // per seed index
};

struct MatrixReport {
    std::vector<MatrixCell> cells;
    std::vector<TrialResult> results;
    std::vector<std::string> ordering_failures;  // empty = all orderings hold
};

/// Full cross product with per-cell median/IQR; writes matrix.csv,
/// matrix.json, per-run logs and a manifest under out_dir (if non-empty).
MatrixReport run_matrix(const HarnessConfig& cfg, std::uint64_t root_seed,
                        const std::filesystem::path& out_dir, bool check_orderings);

/// The paper-anchored orderings; returns human-readable failure lines.
std::vector<std::string> check_orderings(const std::vector<MatrixCell>& cells);

double median(std::vector<double> values);
double interquartile_range(std::vector<double> values);

void write_matrix_csv(const MatrixReport& report, const std::filesystem::path& path);
void write_matrix_json(const MatrixReport& report, const std::filesystem::path& path);

/// Run manifest written beside every CLI output (no timestamps, so reruns
/// are byte-identical).
void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const config::ConfigMap& resolved_config, std::uint64_t seed);

}  // namespace rftwin::harness
