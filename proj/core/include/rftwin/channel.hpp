#pragma once

#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rftwin/config.hpp"
#include "rftwin/geo.hpp"
#include "rftwin/rng.hpp"

namespace rftwin::channel {

inline constexpr double kSpeedOfLightMps = 299'792'458.0;
// Receiver sensitivity floor; keeps nulls and deep fades finite downstream.
inline constexpr double kNoiseFloorDbm = -120.0;
// Sentinel for perfect two-ray nulls.
inline constexpr double kGainFloorDb = -400.0;
// 0.1st-percentile z-score used to size deep-fade shadowing.
inline constexpr double kDeepFadeZ = 3.09;

/// Elevation-only antenna pattern: monotone (angle_deg, gain_dBi) knots
/// covering [-90, 90], linearly interpolated.
struct AntennaPattern {
    std::vector<std::pair<double, double>> gain_table;

    static AntennaPattern isotropic();
    /// Tabulated half-wave-dipole-like default (2.15 dBi broadside).
    static AntennaPattern dipole();
};

/// Stochastic fade augmentation on top of the deterministic mean.
/// sigma_db is an i.i.d. log-normal shadowing component; max_depth_db sizes a
/// spatially correlated component whose marginal reaches -max_depth_db at its
/// 0.1st percentile. Both may be active at once (the calibrated composite).
struct FadeModel {
    double sigma_db = 0.0;
    double max_depth_db = 0.0;
    double spatial_rate_per_m = 0.1;  // 1 / correlation length

    static FadeModel none() { return {0.0, 0.0, 0.1}; }
    static FadeModel log_normal(double sigma_db) { return {sigma_db, 0.0, 0.1}; }
    static FadeModel deep_fade(double max_depth_db, double spatial_rate_per_m) {
        return {0.0, max_depth_db, spatial_rate_per_m};
    }
    static FadeModel composite(double sigma_db, double max_depth_db, double spatial_rate_per_m) {
        return {sigma_db, max_depth_db, spatial_rate_per_m};
    }

    bool is_none() const { return sigma_db == 0.0 && max_depth_db == 0.0; }
    std::string variant_name() const;
    void validate() const;
};

/// Calibrated mean model: rssi = tx_power + offset_db - 10 n log10(d).
struct LogDistanceModel {
    double offset_db = 0.0;
    double exponent_n = 2.0;
};

struct ChannelParams {
    double carrier_hz = 3.32e9;
    double tx_power_dbm = 20.0;
    AntennaPattern tx_pattern = AntennaPattern::dipole();
    AntennaPattern rx_pattern = AntennaPattern::dipole();
    std::complex<double> reflection_coeff{-0.9, 0.0};
    FadeModel fade = FadeModel::none();
    /// When set, replaces the two-ray mean entirely.
    std::optional<LogDistanceModel> override_model;
    /// Extra path-loss tilt (-10 * excess * log10 d) stacked on the mean;
    /// the RW surrogate uses it to steepen the effective exponent.
    double excess_exponent_n = 0.0;

    void validate() const;
};

/// Free-space amplitude gain: -20 log10(4 pi d / lambda).
double friis_gain_db(double distance_m, double carrier_hz);

/// Linear interpolation in the pattern table; out-of-range elevations are
/// clamped (a one-time diagnostic goes to stderr).
double antenna_gain_db(const AntennaPattern& pattern, double elevation_deg);

/// Coherent direct + ground-reflected ray sum (image method over up = 0).
/// Requires tx.up > 0, rx.up > 0 and nonzero ground separation.
double two_ray_gain_db(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                       const ChannelParams& params);

/// Deterministic mean RSSI at the receiver (no fading).
double mean_rssi_dbm(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                     const ChannelParams& params);

/// Spatially correlated shadowing state threaded through a flight's samples.
/// AR(1) in traversed distance with a stationary N(0, sigma) marginal.
class FadeProcess {
  public:
    explicit FadeProcess(const FadeModel& model);

    /// Fade offset (dB) for a sample taken at rx position `pos`.
    double draw(Rng& rng, const geo::EnuPosition& pos);

  private:
    FadeModel model_;
    double deep_sigma_db_ = 0.0;
    bool primed_ = false;
    double deep_value_db_ = 0.0;
    geo::EnuPosition last_pos_{};
};

/// mean_rssi + fade draw, clamped to the -120 dBm receiver floor.
double sample_rssi_dbm(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                       const ChannelParams& params, FadeProcess& fade, Rng& rng);

/// Config (de)serialization under a dotted prefix, e.g. "env.dt.".
/// Keys: carrier_hz, tx_power_dbm, reflection_coeff_re/im, fade.variant,
/// fade.sigma_db, fade.max_depth_db, fade.spatial_rate_per_m,
/// override.offset_db, override.exponent_n, excess_exponent_n,
/// tx_pattern, rx_pattern ("isotropic" | "dipole").
void to_config(const ChannelParams& params, config::ConfigMap& map, const std::string& prefix);
ChannelParams from_config(const config::ConfigMap& map, const std::string& prefix,
                          const ChannelParams& defaults = {});

/// Stable short id of a channel configuration (used in log metadata).
std::string channel_id(const ChannelParams& params, const std::string& tag);

}  // namespace rftwin::channel
