#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "rftwin/channel.hpp"
#include "rftwin/geo.hpp"
#include "rftwin/measurement.hpp"
#include "rftwin/rng.hpp"

namespace rftwin::pf {

struct Particle {
    geo::EnuPosition pos;  // up fixed at the transmitter antenna height
    double weight = 0.0;
};

struct PfConfig {
    int n_particles = 2000;          // >= 100
    double meas_sigma_db = 6.0;      // Gaussian likelihood std
    double roughening_sigma_m = 2.0; // per-axis process noise for the static target
    double ess_threshold = 0.5;      // resample when ESS < threshold * N
    geo::Rect search_area;
    double tx_height_m = 1.0;        // transmitter antenna height above ground

    void validate() const;
};

struct PfState {
    std::vector<Particle> particles;
    Rng rng;
    int step_count = 0;
    int underflow_resets = 0;  // all-likelihood-underflow diagnostics
};

/// N i.i.d. uniform particles over the search rectangle, weights 1/N.
PfState init_uniform(const PfConfig& cfg, std::uint64_t seed);

/// Roughening step: independent N(0, sigma^2) per horizontal axis, clamped
/// to the search area; weights untouched.
void predict(PfState& state, const PfConfig& cfg);

/// Gaussian likelihood update against the deterministic mean channel.
/// If every likelihood underflows, weights reset to uniform (diagnostic
/// counted in state.underflow_resets).
void update(PfState& state, const geo::EnuPosition& uav_pos, double z_dbm,
            const channel::ChannelParams& params, const PfConfig& cfg);

/// 1 / sum(w^2), in [1, N] for normalized weights.
double effective_sample_size(const PfState& state);

/// Low-variance systematic resampling; copy counts land in
/// {floor(N w), ceil(N w)} and weights reset to 1/N.
void resample_systematic(PfState& state);

/// Weighted mean of particle positions.
geo::EnuPosition estimate(const PfState& state);

struct StepDiag {
    int step = 0;
    double ess = 0.0;
    double est_east_m = 0.0;
    double est_north_m = 0.0;
    double error_m = -1.0;  // -1 when no ground truth was supplied
};

struct RunResult {
    geo::EnuPosition estimate;
    std::vector<StepDiag> trace;
    int resample_count = 0;
    int underflow_resets = 0;
};

/// Full recursion over a measurement log: predict -> update -> conditional
/// resample per sample. Positions come from the log's own frame.
RunResult run(const measurement::MeasurementLog& log, const channel::ChannelParams& params,
              const PfConfig& cfg, std::uint64_t seed,
              std::optional<geo::EnuPosition> truth = std::nullopt);

/// Diagnostics trace as CSV: step,ess,est_east,est_north,error_m.
void write_trace_csv(const std::vector<StepDiag>& trace, const std::filesystem::path& path);

}  // namespace rftwin::pf
