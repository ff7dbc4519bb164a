#include "rftwin/geo.hpp"

#include <numbers>
#include <stdexcept>

namespace rftwin::geo {

namespace {

constexpr double kDegToMeters = kEarthRadiusM * std::numbers::pi / 180.0;

void check_geo(const GeoPosition& p, const char* what) {
    if (!(p.lat_deg >= -90.0 && p.lat_deg <= 90.0))
        throw std::invalid_argument(std::string(what) + ": latitude out of [-90, 90]");
    if (!(p.lon_deg >= -180.0 && p.lon_deg < 180.0))
        throw std::invalid_argument(std::string(what) + ": longitude out of [-180, 180)");
    if (!std::isfinite(p.alt_m))
        throw std::invalid_argument(std::string(what) + ": altitude not finite");
}

// Wrap a longitude difference into [-180, 180) so frames near the antimeridian work.
double wrap_deg(double d) {
    while (d >= 180.0) d -= 360.0;
    while (d < -180.0) d += 360.0;
    return d;
}

}  // namespace

EnuPosition to_enu(const LocalFrame& frame, const GeoPosition& p) {
    check_geo(frame.origin, "frame origin");
    check_geo(p, "position");
    const double lat0_rad = frame.origin.lat_deg * std::numbers::pi / 180.0;
    return {
        wrap_deg(p.lon_deg - frame.origin.lon_deg) * std::cos(lat0_rad) * kDegToMeters,
        (p.lat_deg - frame.origin.lat_deg) * kDegToMeters,
        p.alt_m - frame.origin.alt_m,
    };
}

GeoPosition to_geo(const LocalFrame& frame, const EnuPosition& p) {
    check_geo(frame.origin, "frame origin");
    if (!std::isfinite(p.east_m) || !std::isfinite(p.north_m) || !std::isfinite(p.up_m))
        throw std::invalid_argument("enu position not finite");
    const double lat0_rad = frame.origin.lat_deg * std::numbers::pi / 180.0;
    GeoPosition out{
        frame.origin.lat_deg + p.north_m / kDegToMeters,
        frame.origin.lon_deg + p.east_m / (std::cos(lat0_rad) * kDegToMeters),
        frame.origin.alt_m + p.up_m,
    };
    out.lon_deg = wrap_deg(out.lon_deg);
    return out;
}

double distance_3d(const EnuPosition& a, const EnuPosition& b) {
    const double de = a.east_m - b.east_m;
    const double dn = a.north_m - b.north_m;
    const double du = a.up_m - b.up_m;
    return std::sqrt(de * de + dn * dn + du * du);
}

double ground_distance(const EnuPosition& a, const EnuPosition& b) {
    return std::hypot(a.east_m - b.east_m, a.north_m - b.north_m);
}

}  // namespace rftwin::geo
