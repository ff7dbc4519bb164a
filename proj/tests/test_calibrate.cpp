#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "rftwin/calibrate.hpp"

using namespace rftwin;
using calibrate::CalibrationReport;

namespace {

const geo::LocalFrame kFrame{{35.0, -78.0, 0.0}};

channel::ChannelParams log_distance_source(double sigma_db) {
    channel::ChannelParams p;
    p.tx_power_dbm = 20.0;
    p.override_model = channel::LogDistanceModel{-40.0, 3.0};
    p.fade = sigma_db > 0.0 ? channel::FadeModel::log_normal(sigma_db)
                            : channel::FadeModel::none();
    return p;
}

measurement::MeasurementLog survey_log(const geo::GeoPosition& ugv,
                                       const channel::ChannelParams& params, std::uint64_t seed,
                                       double rate_hz = 1.0) {
    const auto traj = vehicle::plan_lawnmower(kFrame, {0, 0, 300, 300}, 30.0, 60.0, 5.0);
    return measurement::generate_log(traj, kFrame, ugv, params, rate_hz, seed, "RW-surrogate");
}

}  // namespace

TEST_CASE("generate-then-fit recovers the synthetic log-distance model") {
    const auto params = log_distance_source(6.0);
    const geo::GeoPosition ugv1 = geo::to_geo(kFrame, {80.0, 120.0, 1.0});
    const geo::GeoPosition ugv2 = geo::to_geo(kFrame, {220.0, 180.0, 1.0});
    const std::vector<measurement::MeasurementLog> logs = {
        survey_log(ugv1, params, 1018, 2.5),
        survey_log(ugv2, params, 1019, 2.5),
    };
    const auto report = calibrate::fit_log_distance(logs, {ugv1, ugv2});
    CHECK(report.n_samples >= 2000);
    CHECK(report.exponent_n >= 2.95);
    CHECK(report.exponent_n <= 3.05);
    CHECK(report.sigma_db >= 5.4);
    CHECK(report.sigma_db <= 6.6);
    // Absolute rssi at 1 m: tx_power + model offset.
    CHECK(report.offset_db == doctest::Approx(-20.0).epsilon(0.1));
}

TEST_CASE("noiseless data fits exactly with r^2 = 1") {
    const auto params = log_distance_source(0.0);
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {150.0, 150.0, 1.0});
    const auto report = calibrate::fit_log_distance({survey_log(ugv, params, 5)}, {ugv});
    CHECK(report.exponent_n == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(report.offset_db == doctest::Approx(-20.0).epsilon(1e-9));
    CHECK(report.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.sigma_db < 1e-6);
    CHECK(report.fade_depth_p999_db < 1e-6);
}

TEST_CASE("adding a constant shifts the offset and nothing else") {
    const auto params = log_distance_source(3.0);
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {100.0, 90.0, 1.0});
    auto log = survey_log(ugv, params, 17);
    const auto base = calibrate::fit_log_distance({log}, {ugv});
    for (auto& s : log.samples) s.rssi_dbm += 7.25;
    const auto shifted = calibrate::fit_log_distance({log}, {ugv});
    CHECK(shifted.offset_db - base.offset_db == doctest::Approx(7.25).epsilon(1e-9));
    CHECK(shifted.exponent_n == doctest::Approx(base.exponent_n).epsilon(1e-12));
    CHECK(shifted.sigma_db == doctest::Approx(base.sigma_db).epsilon(1e-9));
}

TEST_CASE("insufficient or degenerate data is rejected") {
    const auto params = log_distance_source(0.0);
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {150.0, 150.0, 1.0});
    auto log = survey_log(ugv, params, 5);
    log.samples.resize(20);
    CHECK_THROWS_WITH_AS(calibrate::fit_log_distance({log}, {ugv}),
                         doctest::Contains("at least 50"), std::invalid_argument);

    // A short straight pass 1 km away: all distances within 5%.
    vehicle::Trajectory tight;
    tight.waypoints.push_back({geo::to_geo(kFrame, {1000.0, 0.0, 30.0}), 1.0});
    tight.waypoints.push_back({geo::to_geo(kFrame, {1000.0, 30.0, 30.0}), 1.0});
    const auto far_log = measurement::generate_log(tight, kFrame, geo::to_geo(kFrame, {0, 0, 1}),
                                                   params, 2.0, 9, "DT");
    CHECK(far_log.samples.size() >= 50);
    CHECK_THROWS_WITH_AS(calibrate::fit_log_distance({far_log}, {geo::to_geo(kFrame, {0, 0, 1})}),
                         doctest::Contains("unidentifiable"), std::invalid_argument);

    CHECK_THROWS_AS(calibrate::fit_log_distance({}, {}), std::invalid_argument);
}

TEST_CASE("far-field two-ray data fits an exponent of 4") {
    channel::ChannelParams params;
    params.tx_power_dbm = 60.0;  // keeps the far samples above the -120 dBm floor
    params.carrier_hz = 2.99792458e9;  // lambda = 0.1 m
    params.tx_pattern = channel::AntennaPattern::isotropic();
    params.rx_pattern = channel::AntennaPattern::isotropic();
    params.reflection_coeff = {-1.0, 0.0};
    params.fade = channel::FadeModel::none();

    // h_t = h_r = 2 m -> break distance 160 m; sample 3.2 km .. 16 km.
    vehicle::Trajectory pass;
    pass.waypoints.push_back({geo::to_geo(kFrame, {3200.0, 0.0, 2.0}), 30.0});
    pass.waypoints.push_back({geo::to_geo(kFrame, {9000.0, 0.0, 2.0}), 30.0});
    pass.waypoints.push_back({geo::to_geo(kFrame, {9000.0, 9000.0, 2.0}), 30.0});
    const geo::GeoPosition tx = geo::to_geo(kFrame, {0.0, 0.0, 2.0});
    const auto log = measurement::generate_log(pass, kFrame, tx, params, 1.0, 3, "DT");
    const auto report = calibrate::fit_log_distance({log}, {tx});
    CHECK(report.exponent_n == doctest::Approx(4.0).epsilon(0.025));
}

TEST_CASE("apply rewrites the override and composes the fade model") {
    CalibrationReport report;
    report.offset_db = -22.0;
    report.exponent_n = 3.4;
    report.sigma_db = 8.0;
    report.fade_depth_p999_db = 30.0;
    report.n_samples = 1000;
    report.r_squared = 0.9;

    channel::ChannelParams params;
    params.tx_power_dbm = 20.0;
    params.excess_exponent_n = 0.5;
    const auto tuned = calibrate::apply(report, params);

    REQUIRE(tuned.override_model.has_value());
    CHECK(tuned.override_model->offset_db == doctest::Approx(-42.0));
    CHECK(tuned.override_model->exponent_n == 3.4);
    CHECK(tuned.excess_exponent_n == 0.0);
    // Marginal std is preserved; the correlated share is capped at sigma.
    const double sigma_corr = std::min(8.0, 30.0 / channel::kDeepFadeZ);
    CHECK(tuned.fade.max_depth_db ==
          doctest::Approx(channel::kDeepFadeZ * sigma_corr).epsilon(1e-12));
    CHECK(std::sqrt(tuned.fade.sigma_db * tuned.fade.sigma_db + sigma_corr * sigma_corr) ==
          doctest::Approx(8.0).epsilon(1e-9));
    // Original untouched.
    CHECK_FALSE(params.override_model.has_value());

    // mean rssi at 10 m: offset - 10 n (absolute scale).
    const geo::EnuPosition tx{0, 0, 1};
    const geo::EnuPosition rx10{std::sqrt(10.0 * 10.0 - 9.0 * 9.0), 0, 10.0};  // d_3d = 10 at up=10
    CHECK(geo::distance_3d(tx, rx10) == doctest::Approx(10.0));
    CHECK(channel::mean_rssi_dbm(tx, rx10, tuned) ==
          doctest::Approx(report.offset_db - 10.0 * report.exponent_n).epsilon(1e-9));

    // Idempotent.
    const auto twice = calibrate::apply(report, tuned);
    CHECK(twice.override_model->offset_db == tuned.override_model->offset_db);
    CHECK(twice.override_model->exponent_n == tuned.override_model->exponent_n);
    CHECK(twice.fade.sigma_db == tuned.fade.sigma_db);
    CHECK(twice.fade.max_depth_db == tuned.fade.max_depth_db);
}

TEST_CASE("post-apply sample spread matches the fitted sigma within 5%") {
    CalibrationReport report;
    report.offset_db = -20.0;
    report.exponent_n = 3.0;
    report.sigma_db = 8.0;
    report.fade_depth_p999_db = 8.0 * channel::kDeepFadeZ;  // Gaussian-consistent depth
    report.n_samples = 500;
    report.r_squared = 0.8;
    channel::ChannelParams params;
    params.tx_power_dbm = 20.0;
    const auto tuned = calibrate::apply(report, params);

    channel::FadeProcess fade(tuned.fade);
    Rng rng(2468);
    const geo::EnuPosition tx{0, 0, 1};
    double sum = 0, sq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        // Walk far between draws so the correlated component decorrelates.
        const geo::EnuPosition rx{100.0 + 50.0 * (i % 7), 60.0 * ((i * 13) % 11), 30.0};
        const double v =
            channel::sample_rssi_dbm(tx, rx, tuned, fade, rng) - channel::mean_rssi_dbm(tx, rx, tuned);
        sum += v;
        sq += v * v;
    }
    const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(stddev == doctest::Approx(8.0).epsilon(0.05));
}

TEST_CASE("fit is a fixed point of generate-then-fit") {
    // Fit data generated by a fitted model and get the same model back.
    CalibrationReport seed_report;
    seed_report.offset_db = -25.0;
    seed_report.exponent_n = 3.2;
    seed_report.sigma_db = 5.0;
    seed_report.fade_depth_p999_db = 5.0 * channel::kDeepFadeZ;
    channel::ChannelParams params;
    params.tx_power_dbm = 20.0;

    // Spatially correlated fades make single-log fits wander, so pool six
    // logs with spread-out truths, the way the harness pools team logs.
    const double east[6] = {70, 230, 150, 40, 260, 180};
    const double north[6] = {60, 240, 150, 210, 90, 30};
    auto current = seed_report;
    for (int iter = 0; iter < 2; ++iter) {
        const auto tuned = calibrate::apply(current, params);
        std::vector<measurement::MeasurementLog> logs;
        std::vector<geo::GeoPosition> truths;
        for (int i = 0; i < 6; ++i) {
            const auto truth = geo::to_geo(kFrame, {east[i], north[i], 1.0});
            logs.push_back(survey_log(truth, tuned, 600 + 10 * iter + i, 2.0));
            truths.push_back(truth);
        }
        current = calibrate::fit_log_distance(logs, truths);
    }
    CHECK(std::abs(current.offset_db - seed_report.offset_db) < 2.5);
    CHECK(std::abs(current.exponent_n - seed_report.exponent_n) < 0.12);
    CHECK(std::abs(current.sigma_db - seed_report.sigma_db) < 0.4);
}

TEST_CASE("residual traces: zeros on noiseless data, consistent percentiles") {
    const auto params = log_distance_source(0.0);
    const geo::GeoPosition ugv = geo::to_geo(kFrame, {150.0, 150.0, 1.0});
    const auto log = survey_log(ugv, params, 5);
    const auto report = calibrate::fit_log_distance({log}, {ugv});
    const auto rows = calibrate::residual_trace(log, report, ugv);
    REQUIRE(rows.size() == log.samples.size());
    for (const auto& r : rows) CHECK(std::abs(r.residual_db) < 1e-6);

    // Noisy pool: residual mean ~ 0 (OLS) and the reported p999 depth matches
    // a direct quantile of the trace residuals.
    const auto noisy_params = log_distance_source(6.0);
    const auto noisy = survey_log(ugv, noisy_params, 8, 2.0);
    const auto noisy_report = calibrate::fit_log_distance({noisy}, {ugv});
    const auto noisy_rows = calibrate::residual_trace(noisy, noisy_report, ugv);
    double mean = 0;
    std::vector<double> residuals;
    for (const auto& r : noisy_rows) {
        mean += r.residual_db;
        residuals.push_back(r.residual_db);
    }
    mean /= static_cast<double>(noisy_rows.size());
    CHECK(std::abs(mean) < 1e-9);

    std::sort(residuals.begin(), residuals.end());
    const double pos = 0.001 * static_cast<double>(residuals.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double q =
        residuals[lo] + (pos - static_cast<double>(lo)) * (residuals[lo + 1] - residuals[lo]);
    CHECK(noisy_report.fade_depth_p999_db == doctest::Approx(-q).epsilon(1e-9));
}

TEST_CASE("report files round-trip exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rftwin_cal_test";
    fs::create_directories(dir);

    CalibrationReport r;
    r.offset_db = -21.730000000000001;
    r.exponent_n = 3.4571234567891234;
    r.sigma_db = 7.9991234500000004;
    r.fade_depth_p999_db = 24.680000000000001;
    r.n_samples = 2402;
    r.r_squared = 0.87654321098765432;
    calibrate::write_report(r, dir / "report.txt");
    const auto back = calibrate::read_report(dir / "report.txt");
    CHECK(back.offset_db == r.offset_db);
    CHECK(back.exponent_n == r.exponent_n);
    CHECK(back.sigma_db == r.sigma_db);
    CHECK(back.fade_depth_p999_db == r.fade_depth_p999_db);
    CHECK(back.n_samples == r.n_samples);
    CHECK(back.r_squared == r.r_squared);

    CHECK_THROWS_AS(calibrate::read_report(dir / "missing.txt"), std::runtime_error);
}
