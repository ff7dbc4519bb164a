#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>

#include "rftwin/measurement.hpp"

using namespace rftwin;
using geo::LocalFrame;

namespace {

const LocalFrame kFrame{{35.0, -78.0, 0.0}};

channel::ChannelParams quiet_channel() {
    channel::ChannelParams p;
    p.fade = channel::FadeModel::none();
    return p;
}

vehicle::Trajectory test_mission() {
    return vehicle::plan_lawnmower(kFrame, {0, 0, 100, 100}, 30.0, 25.0, 5.0);
}

}  // namespace

TEST_CASE("noiseless log rows equal the mean channel row-for-row") {
    const auto params = quiet_channel();
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {40.0, 55.0, 1.0});
    const auto log = measurement::generate_log(test_mission(), kFrame, ugv, params, 2.0, 7,
                                               "DT");
    const geo::EnuPosition tx = geo::to_enu(kFrame, ugv);
    const auto route = vehicle::compile(test_mission(), kFrame);
    const auto positions = vehicle::sample_positions(route, 2.0);
    REQUIRE(log.samples.size() == positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        CHECK(log.samples[i].t_s == positions[i].first);
        CHECK(log.samples[i].rssi_dbm ==
              channel::mean_rssi_dbm(tx, positions[i].second, params));
    }
}

TEST_CASE("600 m path at 5 m/s sampled at 1 Hz gives 121 samples") {
    const auto log = measurement::generate_log(test_mission(), kFrame,
                                               geo::to_geo(kFrame, {40.0, 55.0, 1.0}),
                                               quiet_channel(), 1.0, 7, "DT");
    CHECK(log.samples.size() == 121);
}

TEST_CASE("same seed gives byte-identical logs") {
    auto params = quiet_channel();
    params.fade = channel::FadeModel::composite(4.0, 60.0, 0.1);
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {40.0, 55.0, 1.0});
    const auto a = measurement::generate_log(test_mission(), kFrame, ugv, params, 2.0, 7, "DT");
    const auto b = measurement::generate_log(test_mission(), kFrame, ugv, params, 2.0, 7, "DT");
    CHECK(measurement::to_csv(a) == measurement::to_csv(b));
    const auto c = measurement::generate_log(test_mission(), kFrame, ugv, params, 2.0, 8, "DT");
    CHECK(measurement::to_csv(a) != measurement::to_csv(c));
}

TEST_CASE("log rssi never drops below the receiver floor") {
    auto params = quiet_channel();
    params.tx_power_dbm = -40.0;
    params.fade = channel::FadeModel::deep_fade(60.0, 0.1);
    const auto log = measurement::generate_log(test_mission(), kFrame,
                                               geo::to_geo(kFrame, {40.0, 55.0, 1.0}), params,
                                               2.0, 5, "DT");
    for (const auto& s : log.samples) CHECK(s.rssi_dbm >= channel::kNoiseFloorDbm);
}

TEST_CASE("csv round trip preserves fields to 1e-9 relative") {
    auto params = quiet_channel();
    params.fade = channel::FadeModel::log_normal(6.0);
    const auto log = measurement::generate_log(test_mission(), kFrame,
                                               geo::to_geo(kFrame, {40.0, 55.0, 1.0}), params,
                                               2.0, 99, "RW-surrogate");
    const auto back = measurement::from_csv(measurement::to_csv(log));
    CHECK(back.meta.env_tag == log.meta.env_tag);
    CHECK(back.meta.seed == log.meta.seed);
    CHECK(back.meta.channel_id == log.meta.channel_id);
    CHECK(std::abs(back.meta.frame_origin.lat_deg - 35.0) < 1e-9);
    CHECK(std::abs(back.meta.frame_origin.lon_deg + 78.0) < 1e-9);
    REQUIRE(back.samples.size() == log.samples.size());
    for (std::size_t i = 0; i < log.samples.size(); ++i) {
        const auto& a = log.samples[i];
        const auto& b = back.samples[i];
        CHECK(std::abs(b.t_s - a.t_s) <= 1e-9 * std::max(1.0, std::abs(a.t_s)));
        CHECK(std::abs(b.pos.lat_deg - a.pos.lat_deg) <= 1e-9 * std::abs(a.pos.lat_deg));
        CHECK(std::abs(b.pos.lon_deg - a.pos.lon_deg) <= 1e-9 * std::abs(a.pos.lon_deg));
        CHECK(std::abs(b.pos.alt_m - a.pos.alt_m) <= 1e-9 * std::abs(a.pos.alt_m));
        CHECK(std::abs(b.rssi_dbm - a.rssi_dbm) <= 1e-9 * std::abs(a.rssi_dbm));
    }
    // A second pass is bit-stable.
    CHECK(measurement::to_csv(back) == measurement::to_csv(log));
}

TEST_CASE("csv header and metadata layout is fixed") {
    measurement::MeasurementLog log;
    log.meta.frame_origin = {35.0, -78.0, 0.0};
    log.meta.channel_id = "DT-feedc0de";
    log.meta.seed = 11;
    log.meta.env_tag = "DT";
    log.samples.push_back({0.0, {35.001, -78.001, 30.0}, -62.5});
    CHECK(measurement::to_csv(log) ==
          "#frame_origin_lat=35\n"
          "#frame_origin_lon=-78\n"
          "#env_tag=DT\n"
          "#seed=11\n"
          "#channel_id=DT-feedc0de\n"
          "t_s,lat_deg,lon_deg,alt_m,rssi_dbm\n"
          "0,35.001,-78.001,30,-62.5\n");
}

TEST_CASE("csv errors carry line numbers") {
    const std::string header = "t_s,lat_deg,lon_deg,alt_m,rssi_dbm\n";
    CHECK_THROWS_WITH_AS(measurement::from_csv(header), doctest::Contains("empty log"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(
        measurement::from_csv(header + "0,35,-78,30,-60\n1,35,-78,30\n"),
        doctest::Contains("line 3"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        measurement::from_csv(header + "0,35,-78,30,-60\n2,35,-78,30,-61\n1,35,-78,30,-62\n"),
        doctest::Contains("line 4"), std::runtime_error);
    CHECK_THROWS_WITH_AS(measurement::from_csv(header + "0,35,-78,30,abc\n"),
                         doctest::Contains("line 2"), std::runtime_error);
    CHECK_THROWS_WITH_AS(measurement::from_csv(header + "0,35,-78,30,-200\n"),
                         doctest::Contains("rssi"), std::runtime_error);
    CHECK_THROWS_WITH_AS(measurement::from_csv("0,35,-78,30,-60\n"),
                         doctest::Contains("header"), std::runtime_error);
}

TEST_CASE("csv file round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rftwin_measurement_test";
    fs::create_directories(dir);
    const auto log = measurement::generate_log(test_mission(), kFrame,
                                               geo::to_geo(kFrame, {40.0, 55.0, 1.0}),
                                               quiet_channel(), 2.0, 3, "DT");
    measurement::write_csv(log, dir / "log.csv");
    const auto back = measurement::read_csv(dir / "log.csv");
    CHECK(measurement::to_csv(back) == measurement::to_csv(log));
}
