#pragma once

#include <cmath>

namespace rftwin::geo {

/// WGS-84-style geodetic position: degrees plus meters above the frame reference.
struct GeoPosition {
    double lat_deg = 0.0;  // [-90, 90]
    double lon_deg = 0.0;  // [-180, 180)
    double alt_m = 0.0;
};

/// Local tangent-plane position in meters (east, north, up).
struct EnuPosition {
    double east_m = 0.0;
    double north_m = 0.0;
    double up_m = 0.0;
};

/// Anchors the local ENU frame at a geodetic origin.
struct LocalFrame {
    GeoPosition origin;
};

/// Axis-aligned rectangle in the local frame, used for flight areas,
/// search areas and the AoI.
struct Rect {
    double min_east_m = 0.0;
    double min_north_m = 0.0;
    double max_east_m = 0.0;
    double max_north_m = 0.0;

    double width() const { return max_east_m - min_east_m; }
    double height() const { return max_north_m - min_north_m; }
    double diagonal() const { return std::hypot(width(), height()); }
    bool contains(const EnuPosition& p) const {
        return p.east_m >= min_east_m && p.east_m <= max_east_m &&
               p.north_m >= min_north_m && p.north_m <= max_north_m;
    }
    EnuPosition center(double up_m = 0.0) const {
        return {0.5 * (min_east_m + max_east_m), 0.5 * (min_north_m + max_north_m), up_m};
    }
    bool degenerate() const { return width() <= 0.0 || height() <= 0.0; }
};

// Spherical earth radius used by the equirectangular local approximation.
inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Equirectangular geodetic -> ENU conversion. Valid within ~10 km of the
/// frame origin; throws std::invalid_argument on out-of-range lat/lon.
EnuPosition to_enu(const LocalFrame& frame, const GeoPosition& p);

/// Exact inverse of to_enu under the same approximation.
GeoPosition to_geo(const LocalFrame& frame, const EnuPosition& p);

double distance_3d(const EnuPosition& a, const EnuPosition& b);
double ground_distance(const EnuPosition& a, const EnuPosition& b);

}  // namespace rftwin::geo
