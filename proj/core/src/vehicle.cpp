#include "rftwin/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin::vehicle {

namespace {

void validate_trajectory(const Trajectory& traj) {
    if (traj.waypoints.size() < 2)
        throw std::invalid_argument("trajectory needs at least two waypoints");
    for (const auto& wp : traj.waypoints) {
        if (!(wp.speed_mps > 0.0 && wp.speed_mps <= 30.0))
            throw std::invalid_argument("waypoint speed must be in (0, 30] m/s");
    }
}

}  // namespace

double Route::path_length_m() const {
    double total = 0.0;
    for (double len : segment_length_m) total += len;
    return total;
}

Route compile(const Trajectory& traj, const geo::LocalFrame& frame) {
    validate_trajectory(traj);
    Route route;
    route.loop = traj.loop;
    route.points.reserve(traj.waypoints.size());
    for (const auto& wp : traj.waypoints) route.points.push_back(geo::to_enu(frame, wp.pos));

    route.cum_time_s.push_back(0.0);
    for (std::size_t i = 0; i + 1 < route.points.size(); ++i) {
        const double len = geo::distance_3d(route.points[i], route.points[i + 1]);
        if (!(len > 1e-9))
            throw std::invalid_argument("consecutive waypoints must be distinct (segment " +
                                        std::to_string(i) + ")");
        const double speed = traj.waypoints[i].speed_mps;
        route.segment_length_m.push_back(len);
        route.segment_speed_mps.push_back(speed);
        route.cum_time_s.push_back(route.cum_time_s.back() + len / speed);
    }
    return route;
}

VehicleState state_at(const Route& route, double t_s) {
    if (!(t_s >= 0.0)) throw std::invalid_argument("mission time must be >= 0");
    const double total = route.total_time_s();
    VehicleState st;
    double t = t_s;
    if (route.loop && total > 0.0) t = std::fmod(t, total);
    if (t >= total) {
        st.t_s = t_s;
        st.pos = route.points.back();
        st.segment_index = route.segment_length_m.size() - 1;
        st.done = !route.loop;
        return st;
    }
    // Last interval with cum_time <= t.
    const auto it = std::upper_bound(route.cum_time_s.begin(), route.cum_time_s.end(), t);
    const std::size_t seg = static_cast<std::size_t>(it - route.cum_time_s.begin()) - 1;
    const double along_m = (t - route.cum_time_s[seg]) * route.segment_speed_mps[seg];
    const double f = along_m / route.segment_length_m[seg];
    const auto& a = route.points[seg];
    const auto& b = route.points[seg + 1];
    st.t_s = t_s;
    st.pos = {a.east_m + f * (b.east_m - a.east_m), a.north_m + f * (b.north_m - a.north_m),
              a.up_m + f * (b.up_m - a.up_m)};
    st.segment_index = seg;
    st.done = false;
    return st;
}

VehicleState step(const VehicleState& state, const Route& route, double dt_s) {
    if (!(dt_s > 0.0)) throw std::invalid_argument("dt must be > 0");
    return state_at(route, state.t_s + dt_s);
}

std::vector<std::pair<double, geo::EnuPosition>> sample_positions(const Route& route,
                                                                  double rate_hz) {
    if (!(rate_hz > 0.0)) throw std::invalid_argument("sample rate must be > 0");
    const double duration = route.total_time_s();
    // Small epsilon so durations that are integers up to rounding keep their last sample.
    const auto count = static_cast<std::size_t>(std::floor(duration * rate_hz + 1e-9)) + 1;
    std::vector<std::pair<double, geo::EnuPosition>> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / rate_hz;
        out.emplace_back(t, state_at(route, t).pos);
    }
    return out;
}

Trajectory plan_lawnmower(const geo::LocalFrame& frame, const geo::Rect& area, double altitude_m,
                          double lane_spacing_m, double speed_mps) {
    if (area.degenerate()) throw std::invalid_argument("lawnmower area is degenerate");
    if (!(lane_spacing_m > 0.0)) throw std::invalid_argument("lane spacing must be > 0");
    if (!(altitude_m > 0.0)) throw std::invalid_argument("altitude must be > 0");

    // Lanes run parallel to the longer side and are spaced across the shorter one.
    const bool lanes_along_east = area.width() >= area.height();
    const double cross_min = lanes_along_east ? area.min_north_m : area.min_east_m;
    const double cross_max = lanes_along_east ? area.max_north_m : area.max_east_m;
    const double along_min = lanes_along_east ? area.min_east_m : area.min_north_m;
    const double along_max = lanes_along_east ? area.max_east_m : area.max_north_m;

    std::vector<double> lanes;
    if (lane_spacing_m > cross_max - cross_min) {
        lanes.push_back(0.5 * (cross_min + cross_max));
    } else {
        for (std::size_t k = 0;; ++k) {
            const double c = cross_min + static_cast<double>(k) * lane_spacing_m;
            if (c >= cross_max - 1e-9) break;
            lanes.push_back(c);
        }
        lanes.push_back(cross_max);
    }

    Trajectory traj;
    for (std::size_t k = 0; k < lanes.size(); ++k) {
        const double a0 = (k % 2 == 0) ? along_min : along_max;
        const double a1 = (k % 2 == 0) ? along_max : along_min;
        const geo::EnuPosition p0 = lanes_along_east ? geo::EnuPosition{a0, lanes[k], altitude_m}
                                                     : geo::EnuPosition{lanes[k], a0, altitude_m};
        const geo::EnuPosition p1 = lanes_along_east ? geo::EnuPosition{a1, lanes[k], altitude_m}
                                                     : geo::EnuPosition{lanes[k], a1, altitude_m};
        traj.waypoints.push_back({geo::to_geo(frame, p0), speed_mps});
        traj.waypoints.push_back({geo::to_geo(frame, p1), speed_mps});
    }
    validate_trajectory(traj);
    return traj;
}

Trajectory load_waypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open waypoint file: " + path.string());
    Trajectory traj;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        std::istringstream row{std::string(body)};
        Waypoint wp;
        if (!(row >> wp.pos.lat_deg >> wp.pos.lon_deg >> wp.pos.alt_m >> wp.speed_mps))
            throw std::runtime_error(path.string() + " line " + std::to_string(line_no) +
                                     ": expected 'lat lon alt speed'");
        std::string extra;
        if (row >> extra)
            throw std::runtime_error(path.string() + " line " + std::to_string(line_no) +
                                     ": trailing token '" + extra + "'");
        traj.waypoints.push_back(wp);
    }
    validate_trajectory(traj);
    return traj;
}

void save_waypoints(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write waypoint file: " + path.string());
    out << "# lat lon alt speed\n";
    for (const auto& wp : traj.waypoints) {
        out << format_g10(wp.pos.lat_deg) << ' ' << format_g10(wp.pos.lon_deg) << ' '
            << format_g10(wp.pos.alt_m) << ' ' << format_g10(wp.speed_mps) << '\n';
    }
}

}  // namespace rftwin::vehicle
