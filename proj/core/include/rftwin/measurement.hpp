#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rftwin/channel.hpp"
#include "rftwin/geo.hpp"
#include "rftwin/vehicle.hpp"

namespace rftwin::measurement {

struct RssiSample {
    double t_s = 0.0;
    geo::GeoPosition pos;  // UAV position
    double rssi_dbm = 0.0;
};

struct LogMeta {
    geo::GeoPosition frame_origin;  // ground-level anchor (alt 0 by convention)
    std::string channel_id;
    std::uint64_t seed = 0;
    std::string env_tag = "DT";  // DT | RW-surrogate | external
};

struct MeasurementLog {
    LogMeta meta;
    std::vector<RssiSample> samples;

    geo::LocalFrame frame() const { return {meta.frame_origin}; }
};

/// Fly `traj` at `rate_hz`, sampling RSSI from the transmitter at `ugv`
/// through `params`. Deterministic for a fixed seed.
MeasurementLog generate_log(const vehicle::Trajectory& traj, const geo::LocalFrame& frame,
                            const geo::GeoPosition& ugv, const channel::ChannelParams& params,
                            double rate_hz, std::uint64_t seed, const std::string& env_tag);

/// CSV interchange format:
///   #frame_origin_lat=..  #frame_origin_lon=..  #env_tag=..  #seed=..  #channel_id=..
///   t_s,lat_deg,lon_deg,alt_m,rssi_dbm
/// Floats carry 10 significant digits (round-trip error <= 1e-9 relative).
void write_csv(const MeasurementLog& log, const std::filesystem::path& path);
MeasurementLog read_csv(const std::filesystem::path& path);

std::string to_csv(const MeasurementLog& log);
MeasurementLog from_csv(const std::string& text, const std::string& where = "log");

}  // namespace rftwin::measurement
