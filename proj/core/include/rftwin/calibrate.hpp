#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rftwin/channel.hpp"
#include "rftwin/geo.hpp"
#include "rftwin/measurement.hpp"

namespace rftwin::calibrate {

/// Log-distance fit of pooled measurement logs plus residual statistics.
struct CalibrationReport {
    double offset_db = 0.0;          // fitted absolute RSSI at the 1 m reference
    double exponent_n = 2.0;         // path-loss exponent, [1.5, 6]
    double sigma_db = 0.0;           // residual std
    double fade_depth_p999_db = 0.0; // depth of the 0.1st-percentile residual
    int n_samples = 0;
    double r_squared = 0.0;
};

/// OLS of rssi against -10 log10(d_3d) across pooled logs; each log supplies
/// its own transmitter ground truth. Needs >= 50 samples and a distance
/// spread of more than 5%, otherwise the slope is unidentifiable.
CalibrationReport fit_log_distance(const std::vector<measurement::MeasurementLog>& logs,
                                   const std::vector<geo::GeoPosition>& ugv_truths);

/// Returns a copy of `params` retuned to the report: the fitted log-distance
/// model becomes the mean override (offset rebased onto the tx power) and the
/// fade model is rebuilt so its marginal std matches sigma_db, with the
/// correlated deep-fade component sized toward fade_depth_p999_db.
channel::ChannelParams apply(const CalibrationReport& report,
                             const channel::ChannelParams& params);

struct ResidualRow {
    double t_s = 0.0;
    double distance_m = 0.0;
    double measured_dbm = 0.0;
    double residual_db = 0.0;  // measured - fitted mean
};

std::vector<ResidualRow> residual_trace(const measurement::MeasurementLog& log,
                                        const CalibrationReport& report,
                                        const geo::GeoPosition& ugv_truth);
void write_residual_csv(const std::vector<ResidualRow>& rows, const std::filesystem::path& path);

/// Flat key=value report file; round-trips doubles exactly.
void write_report(const CalibrationReport& report, const std::filesystem::path& path);
CalibrationReport read_report(const std::filesystem::path& path);

}  // namespace rftwin::calibrate
