#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "rftwin/geo.hpp"

namespace rftwin::vehicle {

struct Waypoint {
    geo::GeoPosition pos;
    double speed_mps = 5.0;  // commanded speed leaving this waypoint, (0, 30]
};

struct Trajectory {
    std::vector<Waypoint> waypoints;  // >= 2, consecutive waypoints distinct
    bool loop = false;
};

/// Trajectory compiled into the local frame: polyline plus per-segment
/// timing, so position is a pure function of mission time.
struct Route {
    std::vector<geo::EnuPosition> points;
    std::vector<double> segment_length_m;
    std::vector<double> segment_speed_mps;
    std::vector<double> cum_time_s;  // size = segments + 1, cum_time_s[0] = 0
    bool loop = false;

    double total_time_s() const { return cum_time_s.back(); }
    double path_length_m() const;
};

Route compile(const Trajectory& traj, const geo::LocalFrame& frame);

struct VehicleState {
    double t_s = 0.0;
    geo::EnuPosition pos;
    std::size_t segment_index = 0;
    bool done = false;
};

/// Point-mass state at mission time t: constant speed along the polyline,
/// exact waypoint arrivals, done once past the final waypoint (loop=false).
VehicleState state_at(const Route& route, double t_s);

/// Advance by dt; equivalent to state_at(route, state.t_s + dt), so stepping
/// is independent of how dt is partitioned.
VehicleState step(const VehicleState& state, const Route& route, double dt_s);

/// Uniform-cadence positions over one pass: t_k = k / rate_hz,
/// k = 0 .. floor(duration * rate).
std::vector<std::pair<double, geo::EnuPosition>> sample_positions(const Route& route,
                                                                  double rate_hz);

/// Boustrophedon sweep covering `area` at constant altitude, lanes parallel
/// to the longer side. A spacing wider than the cross extent degenerates to a
/// single center lane.
Trajectory plan_lawnmower(const geo::LocalFrame& frame, const geo::Rect& area, double altitude_m,
                          double lane_spacing_m, double speed_mps);

/// Plain-text waypoint files: one "lat lon alt speed" row per waypoint,
/// '#' comments.
Trajectory load_waypoints(const std::filesystem::path& path);
void save_waypoints(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace rftwin::vehicle
