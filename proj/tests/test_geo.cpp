#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "rftwin/geo.hpp"
#include "rftwin/rng.hpp"

using namespace rftwin;
using geo::EnuPosition;
using geo::GeoPosition;
using geo::LocalFrame;

namespace {
const LocalFrame kFrame{{35.0, -78.0, 0.0}};
}

TEST_CASE("to_enu identity at the origin") {
    const auto p = geo::to_enu(kFrame, kFrame.origin);
    CHECK(p.east_m == doctest::Approx(0.0));
    CHECK(p.north_m == doctest::Approx(0.0));
    CHECK(p.up_m == doctest::Approx(0.0));
}

TEST_CASE("to_enu altitude-only offset") {
    const auto p = geo::to_enu(kFrame, {35.0, -78.0, 30.0});
    CHECK(p.east_m == 0.0);
    CHECK(p.north_m == 0.0);
    CHECK(p.up_m == doctest::Approx(30.0));
}

TEST_CASE("to_enu milli-degree of latitude") {
    // R_earth * pi/180 * 0.001, evaluated independently.
    const auto p = geo::to_enu(kFrame, {35.001, -78.0, 0.0});
    CHECK(p.north_m == doctest::Approx(111.19492664455873).epsilon(1e-9));
    CHECK(p.east_m == doctest::Approx(0.0));
}

TEST_CASE("to_geo inverts the milli-degree example") {
    const auto g = geo::to_geo(kFrame, {0.0, 111.19492664455873, 0.0});
    CHECK(g.lat_deg == doctest::Approx(35.001).epsilon(1e-9));
    CHECK(g.lon_deg == doctest::Approx(-78.0));
    const auto origin = geo::to_geo(kFrame, {0.0, 0.0, 0.0});
    CHECK(origin.lat_deg == 35.0);
    CHECK(origin.lon_deg == -78.0);
}

TEST_CASE("out-of-range coordinates are rejected") {
    CHECK_THROWS_AS(geo::to_enu(kFrame, {91.0, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(geo::to_enu(kFrame, {0.0, 180.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(geo::to_enu(kFrame, {0.0, -181.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(geo::to_enu({GeoPosition{95.0, 0.0, 0.0}}, kFrame.origin),
                    std::invalid_argument);
}

TEST_CASE("round trip is identity within 1e-9 deg for points within 10 km") {
    Rng rng(20240611);
    for (int i = 0; i < 2000; ++i) {
        const GeoPosition p{
            35.0 + rng.uniform(-0.09, 0.09),   // ~10 km of latitude
            -78.0 + rng.uniform(-0.11, 0.11),  // ~10 km of longitude at 35N
            rng.uniform(0.0, 120.0),
        };
        const GeoPosition back = geo::to_geo(kFrame, geo::to_enu(kFrame, p));
        CHECK(std::abs(back.lat_deg - p.lat_deg) < 1e-9);
        CHECK(std::abs(back.lon_deg - p.lon_deg) < 1e-9);
        CHECK(std::abs(back.alt_m - p.alt_m) < 1e-9);
    }
}

TEST_CASE("distance examples") {
    CHECK(geo::distance_3d({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(geo::distance_3d({0, 0, 0}, {3, 4, 0}) == doctest::Approx(5.0));
    CHECK(geo::distance_3d({0, 0, 0}, {3, 4, 12}) == doctest::Approx(13.0));
    CHECK(geo::ground_distance({0, 0, 0}, {3, 4, 12}) == doctest::Approx(5.0));
}

TEST_CASE("distance_3d dominates ground_distance, equal iff same height") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const EnuPosition a{rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(0, 100)};
        const EnuPosition b{rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(0, 100)};
        CHECK(geo::distance_3d(a, b) >= geo::ground_distance(a, b));
        const EnuPosition c{b.east_m, b.north_m, a.up_m};
        CHECK(geo::distance_3d(a, c) == doctest::Approx(geo::ground_distance(a, c)));
    }
}

TEST_CASE("to_enu is affine: midpoints map to midpoints") {
    Rng rng(99);
    for (int i = 0; i < 500; ++i) {
        const GeoPosition a{35.0 + rng.uniform(-0.05, 0.05), -78.0 + rng.uniform(-0.05, 0.05),
                            rng.uniform(0.0, 60.0)};
        const GeoPosition b{35.0 + rng.uniform(-0.05, 0.05), -78.0 + rng.uniform(-0.05, 0.05),
                            rng.uniform(0.0, 60.0)};
        const GeoPosition mid{0.5 * (a.lat_deg + b.lat_deg), 0.5 * (a.lon_deg + b.lon_deg),
                              0.5 * (a.alt_m + b.alt_m)};
        const auto ea = geo::to_enu(kFrame, a);
        const auto eb = geo::to_enu(kFrame, b);
        const auto em = geo::to_enu(kFrame, mid);
        CHECK(std::abs(em.east_m - 0.5 * (ea.east_m + eb.east_m)) < 1e-9);
        CHECK(std::abs(em.north_m - 0.5 * (ea.north_m + eb.north_m)) < 1e-9);
        CHECK(std::abs(em.up_m - 0.5 * (ea.up_m + eb.up_m)) < 1e-9);
    }
}

TEST_CASE("rect helpers") {
    const geo::Rect r{0, 0, 400, 300};
    CHECK(r.width() == 400.0);
    CHECK(r.height() == 300.0);
    CHECK(r.diagonal() == doctest::Approx(500.0));
    CHECK(r.contains({0, 0, 5}));
    CHECK(r.contains({400, 300, 0}));
    CHECK_FALSE(r.contains({400.01, 300, 0}));
    CHECK(r.center().east_m == doctest::Approx(200.0));
}
