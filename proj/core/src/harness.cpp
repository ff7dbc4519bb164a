#include "rftwin/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "rftwin/io_util.hpp"
#include "rftwin/version.hpp"

namespace rftwin::harness {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty vector");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double f = pos - static_cast<double>(lo);
    return sorted[lo] + f * (sorted[lo + 1] - sorted[lo]);
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : static_cast<int>(hw);
    }
    threads = std::min<int>(threads, static_cast<int>(n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const auto& tok : split(text, ','))
        if (!trim(tok).empty()) out.push_back(static_cast<int>(parse_int(tok, what)));
    if (out.empty()) throw std::invalid_argument(what + ": empty list");
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty vector");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double interquartile_range(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("iqr of empty vector");
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
}

HarnessConfig HarnessConfig::defaults() {
    HarnessConfig cfg;
    cfg.dt_channel.fade = channel::FadeModel::log_normal(2.0);
    // Rover mast radiates near-isotropically in elevation; the UAV keeps the
    // dipole-like pattern. A dipole on both ends couples elevation into the
    // distance slope so strongly that the log-distance fit becomes
    // unidentifiable on a 400 m field.
    cfg.dt_channel.tx_pattern = channel::AntennaPattern::isotropic();
    cfg.dt_channel.rx_pattern = channel::AntennaPattern::dipole();

    // RW surrogate: steeper slope, wider spread, 60 dB deep fades.
    cfg.rw_channel = cfg.dt_channel;
    cfg.rw_channel.excess_exponent_n = 0.5;
    cfg.rw_channel.fade = channel::FadeModel::composite(
        cfg.dt_channel.fade.sigma_db + 4.0, 60.0, cfg.dt_channel.fade.spatial_rate_per_m);

    cfg.pf_cfg.search_area = cfg.aoi;
    cfg.pf_cfg.tx_height_m = cfg.ugv_height_m;

    cfg.trials = {
        {1, geo::GeoPosition{}, true},
        {2, geo::GeoPosition{}, true},
        {3, geo::GeoPosition{}, false},
    };
    const geo::LocalFrame frame = cfg.frame();
    cfg.trials[0].ugv_truth = geo::to_geo(frame, {200.0, 170.0, cfg.ugv_height_m});
    cfg.trials[1].ugv_truth = geo::to_geo(frame, {290.0, 280.0, cfg.ugv_height_m});
    cfg.trials[2].ugv_truth = geo::to_geo(frame, {375.0, 200.0, cfg.ugv_height_m});
    return cfg;
}

config::ConfigMap HarnessConfig::to_config() const {
    config::ConfigMap m;
    m["field.origin_lat"] = format_exact(field_origin.lat_deg);
    m["field.origin_lon"] = format_exact(field_origin.lon_deg);
    m["aoi.min_east_m"] = format_exact(aoi.min_east_m);
    m["aoi.min_north_m"] = format_exact(aoi.min_north_m);
    m["aoi.max_east_m"] = format_exact(aoi.max_east_m);
    m["aoi.max_north_m"] = format_exact(aoi.max_north_m);
    m["flight.min_east_m"] = format_exact(flight_area.min_east_m);
    m["flight.min_north_m"] = format_exact(flight_area.min_north_m);
    m["flight.max_east_m"] = format_exact(flight_area.max_east_m);
    m["flight.max_north_m"] = format_exact(flight_area.max_north_m);
    m["flight.altitude_m"] = format_exact(flight_altitude_m);
    m["flight.lane_spacing_m"] = format_exact(lane_spacing_m);
    m["flight.speed_mps"] = format_exact(speed_mps);
    m["measure.rate_hz"] = format_exact(rate_hz);
    m["ugv.height_m"] = format_exact(ugv_height_m);
    if (!trajectory_file.empty()) m["sim.trajectory_file"] = trajectory_file;
    channel::to_config(dt_channel, m, "env.dt.");
    channel::to_config(rw_channel, m, "env.rw.");
    m["pf.n_particles"] = std::to_string(pf_cfg.n_particles);
    m["pf.meas_sigma_db"] = format_exact(pf_cfg.meas_sigma_db);
    m["pf.roughening_sigma_m"] = format_exact(pf_cfg.roughening_sigma_m);
    m["pf.ess_threshold"] = format_exact(pf_cfg.ess_threshold);
    m["cnn.grid_rows"] = std::to_string(grid_rows);
    m["cnn.grid_cols"] = std::to_string(grid_cols);
    m["cnn.image_h"] = std::to_string(image_h);
    m["cnn.image_w"] = std::to_string(image_w);
    m["cnn.conv_channels"] = join_ints(train_cfg.conv_channels);
    m["cnn.kernel_size"] = std::to_string(train_cfg.kernel_size);
    m["cnn.epochs"] = std::to_string(train_cfg.epochs);
    m["cnn.lr0"] = format_exact(train_cfg.lr0);
    m["cnn.decay_factor"] = format_exact(train_cfg.decay_factor);
    m["cnn.weight_decay"] = format_exact(train_cfg.weight_decay);
    m["cnn.batch_size"] = std::to_string(train_cfg.batch_size);
    m["cnn.split_train"] = format_exact(train_cfg.train_frac);
    m["cnn.split_val"] = format_exact(train_cfg.val_frac);
    m["cnn.split_test"] = format_exact(train_cfg.test_frac);
    m["dataset.size"] = std::to_string(dataset_size);
    m["calib.n_logs"] = std::to_string(calib_log_count);
    for (const auto& t : trials) {
        const geo::EnuPosition p = geo::to_enu(frame(), t.ugv_truth);
        const std::string prefix = "trial." + std::to_string(t.id) + ".";
        m[prefix + "east_m"] = format_exact(p.east_m);
        m[prefix + "north_m"] = format_exact(p.north_m);
    }
    m["matrix.scenarios"] = join_ints(scenarios);
    {
        std::vector<int> trial_ids;
        for (const auto& t : trials) trial_ids.push_back(t.id);
        m["matrix.trials"] = join_ints(trial_ids);
    }
    {
        std::string est;
        for (std::size_t i = 0; i < estimators.size(); ++i) {
            if (i) est += ',';
            est += estimators[i];
        }
        m["matrix.estimators"] = est;
    }
    m["matrix.n_seeds"] = std::to_string(n_seeds);
    m["matrix.write_logs"] = write_logs ? "true" : "false";
    m["run.threads"] = std::to_string(threads);
    return m;
}

HarnessConfig HarnessConfig::from_config(const config::ConfigMap& map) {
    // Strict key check: typos fail loudly.
    {
        config::ConfigMap canonical = defaults().to_config();
        const std::vector<std::string> optional_keys = {
            "sim.trajectory_file",
            "env.dt.override.offset_db", "env.dt.override.exponent_n",
            "env.rw.override.offset_db", "env.rw.override.exponent_n",
        };
        for (const auto& [key, value] : map) {
            (void)value;
            if (canonical.count(key)) continue;
            if (std::find(optional_keys.begin(), optional_keys.end(), key) !=
                optional_keys.end())
                continue;
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }

    HarnessConfig cfg = defaults();
    cfg.field_origin.lat_deg = config::get_double(map, "field.origin_lat", cfg.field_origin.lat_deg);
    cfg.field_origin.lon_deg = config::get_double(map, "field.origin_lon", cfg.field_origin.lon_deg);
    cfg.aoi.min_east_m = config::get_double(map, "aoi.min_east_m", cfg.aoi.min_east_m);
    cfg.aoi.min_north_m = config::get_double(map, "aoi.min_north_m", cfg.aoi.min_north_m);
    cfg.aoi.max_east_m = config::get_double(map, "aoi.max_east_m", cfg.aoi.max_east_m);
    cfg.aoi.max_north_m = config::get_double(map, "aoi.max_north_m", cfg.aoi.max_north_m);
    cfg.flight_area.min_east_m =
        config::get_double(map, "flight.min_east_m", cfg.flight_area.min_east_m);
    cfg.flight_area.min_north_m =
        config::get_double(map, "flight.min_north_m", cfg.flight_area.min_north_m);
    cfg.flight_area.max_east_m =
        config::get_double(map, "flight.max_east_m", cfg.flight_area.max_east_m);
    cfg.flight_area.max_north_m =
        config::get_double(map, "flight.max_north_m", cfg.flight_area.max_north_m);
    cfg.flight_altitude_m = config::get_double(map, "flight.altitude_m", cfg.flight_altitude_m);
    cfg.lane_spacing_m = config::get_double(map, "flight.lane_spacing_m", cfg.lane_spacing_m);
    cfg.speed_mps = config::get_double(map, "flight.speed_mps", cfg.speed_mps);
    cfg.rate_hz = config::get_double(map, "measure.rate_hz", cfg.rate_hz);
    cfg.ugv_height_m = config::get_double(map, "ugv.height_m", cfg.ugv_height_m);
    cfg.trajectory_file = config::get_string(map, "sim.trajectory_file", cfg.trajectory_file);

    cfg.dt_channel = channel::from_config(map, "env.dt.", cfg.dt_channel);
    // The RW surrogate re-derives from the (possibly overridden) DT channel,
    // then applies any explicit env.rw.* keys.
    channel::ChannelParams rw_default = cfg.dt_channel;
    rw_default.excess_exponent_n = 0.5;
    rw_default.fade = channel::FadeModel::composite(cfg.dt_channel.fade.sigma_db + 4.0, 60.0,
                                                    cfg.dt_channel.fade.spatial_rate_per_m);
    cfg.rw_channel = channel::from_config(map, "env.rw.", rw_default);

    cfg.pf_cfg.n_particles =
        static_cast<int>(config::get_int(map, "pf.n_particles", cfg.pf_cfg.n_particles));
    cfg.pf_cfg.meas_sigma_db =
        config::get_double(map, "pf.meas_sigma_db", cfg.pf_cfg.meas_sigma_db);
    cfg.pf_cfg.roughening_sigma_m =
        config::get_double(map, "pf.roughening_sigma_m", cfg.pf_cfg.roughening_sigma_m);
    cfg.pf_cfg.ess_threshold =
        config::get_double(map, "pf.ess_threshold", cfg.pf_cfg.ess_threshold);
    cfg.pf_cfg.search_area = cfg.aoi;
    cfg.pf_cfg.tx_height_m = cfg.ugv_height_m;

    cfg.grid_rows = static_cast<int>(config::get_int(map, "cnn.grid_rows", cfg.grid_rows));
    cfg.grid_cols = static_cast<int>(config::get_int(map, "cnn.grid_cols", cfg.grid_cols));
    cfg.image_h = static_cast<int>(config::get_int(map, "cnn.image_h", cfg.image_h));
    cfg.image_w = static_cast<int>(config::get_int(map, "cnn.image_w", cfg.image_w));
    if (map.count("cnn.conv_channels"))
        cfg.train_cfg.conv_channels =
            parse_int_list(map.at("cnn.conv_channels"), "cnn.conv_channels");
    cfg.train_cfg.kernel_size =
        static_cast<int>(config::get_int(map, "cnn.kernel_size", cfg.train_cfg.kernel_size));
    cfg.train_cfg.epochs =
        static_cast<int>(config::get_int(map, "cnn.epochs", cfg.train_cfg.epochs));
    cfg.train_cfg.lr0 = config::get_double(map, "cnn.lr0", cfg.train_cfg.lr0);
    cfg.train_cfg.decay_factor =
        config::get_double(map, "cnn.decay_factor", cfg.train_cfg.decay_factor);
    cfg.train_cfg.weight_decay =
        config::get_double(map, "cnn.weight_decay", cfg.train_cfg.weight_decay);
    cfg.train_cfg.batch_size =
        static_cast<int>(config::get_int(map, "cnn.batch_size", cfg.train_cfg.batch_size));
    cfg.train_cfg.train_frac = config::get_double(map, "cnn.split_train", cfg.train_cfg.train_frac);
    cfg.train_cfg.val_frac = config::get_double(map, "cnn.split_val", cfg.train_cfg.val_frac);
    cfg.train_cfg.test_frac = config::get_double(map, "cnn.split_test", cfg.train_cfg.test_frac);
    cfg.dataset_size = static_cast<int>(config::get_int(map, "dataset.size", cfg.dataset_size));
    cfg.calib_log_count =
        static_cast<int>(config::get_int(map, "calib.n_logs", cfg.calib_log_count));

    const geo::LocalFrame frame = cfg.frame();
    for (auto& t : cfg.trials) {
        const std::string prefix = "trial." + std::to_string(t.id) + ".";
        geo::EnuPosition p = geo::to_enu(frame, t.ugv_truth);
        p.east_m = config::get_double(map, prefix + "east_m", p.east_m);
        p.north_m = config::get_double(map, prefix + "north_m", p.north_m);
        p.up_m = cfg.ugv_height_m;
        t.ugv_truth = geo::to_geo(frame, p);
        t.in_flight_area = cfg.flight_area.contains(p);
    }

    if (map.count("matrix.scenarios"))
        cfg.scenarios = parse_int_list(map.at("matrix.scenarios"), "matrix.scenarios");
    if (map.count("matrix.trials")) {
        const auto ids = parse_int_list(map.at("matrix.trials"), "matrix.trials");
        std::vector<TrialSpec> kept;
        for (int id : ids) kept.push_back(cfg.trial(id));
        cfg.trials = kept;
    }
    if (map.count("matrix.estimators")) {
        cfg.estimators.clear();
        for (const auto& tok : split(map.at("matrix.estimators"), ','))
            cfg.estimators.emplace_back(trim(tok));
    }
    cfg.n_seeds = static_cast<int>(config::get_int(map, "matrix.n_seeds", cfg.n_seeds));
    cfg.write_logs = config::get_bool(map, "matrix.write_logs", cfg.write_logs);
    cfg.threads = static_cast<int>(config::get_int(map, "run.threads", cfg.threads));
    cfg.validate();
    return cfg;
}

vehicle::Trajectory HarnessConfig::mission() const {
    if (!trajectory_file.empty()) return vehicle::load_waypoints(trajectory_file);
    return vehicle::plan_lawnmower(frame(), flight_area, flight_altitude_m, lane_spacing_m,
                                   speed_mps);
}

ScenarioSpec HarnessConfig::scenario(int id) const {
    const EnvironmentSpec dt{"DT", dt_channel};
    const EnvironmentSpec rw{"RW-surrogate", rw_channel};
    switch (id) {
        case 1: return {1, dt, dt, false};
        case 2: return {2, dt, rw, false};
        case 3: return {3, dt, rw, true};
        default: throw std::invalid_argument("scenario id must be 1, 2 or 3");
    }
}

const TrialSpec& HarnessConfig::trial(int id) const {
    for (const auto& t : trials)
        if (t.id == id) return t;
    throw std::invalid_argument("trial " + std::to_string(id) + " not configured");
}

void HarnessConfig::validate() const {
    if (aoi.degenerate() || flight_area.degenerate())
        throw std::invalid_argument("aoi/flight area degenerate");
    if (flight_area.min_east_m < aoi.min_east_m || flight_area.max_east_m > aoi.max_east_m ||
        flight_area.min_north_m < aoi.min_north_m || flight_area.max_north_m > aoi.max_north_m)
        throw std::invalid_argument("flight area must lie inside the AoI");
    if (!(rate_hz > 0.0)) throw std::invalid_argument("measure.rate_hz must be > 0");
    if (!(ugv_height_m > 0.0)) throw std::invalid_argument("ugv.height_m must be > 0");
    dt_channel.validate();
    rw_channel.validate();
    pf_cfg.validate();
    train_cfg.validate();
    grid().validate();
    if (image_h < 8 || image_w < 8) throw std::invalid_argument("image dims must be >= 8");
    const int stages = static_cast<int>(train_cfg.conv_channels.size());
    if (image_h % (1 << stages) != 0 || image_w % (1 << stages) != 0)
        throw std::invalid_argument("image dims must divide by 2^conv_stages");
    if (dataset_size < 10 * grid_rows * grid_cols)
        throw std::invalid_argument("dataset.size must be >= 10 * cell count");
    if (n_seeds < 1) throw std::invalid_argument("matrix.n_seeds must be >= 1");
    std::set<int> seen;
    for (int s : scenarios) {
        if (s < 1 || s > 3) throw std::invalid_argument("matrix.scenarios entries must be 1..3");
        if (!seen.insert(s).second) throw std::invalid_argument("duplicate scenario id");
    }
    for (const auto& e : estimators)
        if (e != "pf" && e != "cnn")
            throw std::invalid_argument("matrix.estimators entries must be pf|cnn");
    const geo::LocalFrame fr = frame();
    for (const auto& t : trials) {
        const geo::EnuPosition p = geo::to_enu(fr, t.ugv_truth);
        if (!aoi.contains(p))
            throw std::invalid_argument("trial " + std::to_string(t.id) + " truth outside AoI");
        if (t.id == 3 && flight_area.contains(p))
            throw std::invalid_argument("trial 3 truth must lie outside the flight area");
        if (t.id != 3 && !flight_area.contains(p))
            throw std::invalid_argument("trial " + std::to_string(t.id) +
                                        " truth must lie inside the flight area");
    }
}

calibrate::CalibrationReport calibrate_from_surrogate(const HarnessConfig& cfg,
                                                      std::uint64_t root_seed, int seed_index) {
    const geo::LocalFrame frame = cfg.frame();
    const auto traj = cfg.mission();
    Rng placement(Rng::derive(root_seed, {kSeedCalib, static_cast<std::uint64_t>(seed_index)}));

    std::vector<measurement::MeasurementLog> logs;
    std::vector<geo::GeoPosition> truths;
    for (int i = 0; i < cfg.calib_log_count; ++i) {
        const geo::EnuPosition ugv{
            placement.uniform(cfg.aoi.min_east_m, cfg.aoi.max_east_m),
            placement.uniform(cfg.aoi.min_north_m, cfg.aoi.max_north_m),
            cfg.ugv_height_m,
        };
        const geo::GeoPosition truth = geo::to_geo(frame, ugv);
        const std::uint64_t log_seed = placement.next_u64();
        logs.push_back(measurement::generate_log(traj, frame, truth, cfg.rw_channel, cfg.rate_hz,
                                                 log_seed, "RW-surrogate"));
        truths.push_back(truth);
    }
    return calibrate::fit_log_distance(logs, truths);
}

measurement::MeasurementLog make_test_log(const HarnessConfig& cfg, const ScenarioSpec& scenario,
                                          const TrialSpec& trial, std::uint64_t root_seed,
                                          int seed_index) {
    const std::uint64_t seed =
        Rng::derive(root_seed, {kSeedTestLog, static_cast<std::uint64_t>(scenario.id),
                                static_cast<std::uint64_t>(trial.id),
                                static_cast<std::uint64_t>(seed_index)});
    return measurement::generate_log(cfg.mission(), cfg.frame(), trial.ugv_truth,
                                     scenario.test_env.channel, cfg.rate_hz, seed,
                                     scenario.test_env.tag);
}

fingerprint::Dataset make_training_dataset(const HarnessConfig& cfg,
                                           const channel::ChannelParams& develop_channel,
                                           std::uint64_t root_seed, int scenario_id,
                                           int seed_index) {
    const geo::LocalFrame frame = cfg.frame();
    const auto traj = cfg.mission();
    const auto grid = cfg.grid();
    Rng rng(Rng::derive(root_seed, {kSeedDataset, static_cast<std::uint64_t>(scenario_id),
                                    static_cast<std::uint64_t>(seed_index)}));

    fingerprint::Dataset ds;
    ds.images.reserve(static_cast<std::size_t>(cfg.dataset_size));
    for (int i = 0; i < cfg.dataset_size; ++i) {
        const geo::EnuPosition ugv{
            rng.uniform(cfg.aoi.min_east_m, cfg.aoi.max_east_m),
            rng.uniform(cfg.aoi.min_north_m, cfg.aoi.max_north_m),
            cfg.ugv_height_m,
        };
        const auto log = measurement::generate_log(traj, frame, geo::to_geo(frame, ugv),
                                                   develop_channel, cfg.rate_hz, rng.next_u64(),
                                                   "DT");
        ds.images.push_back(
            fingerprint::rasterize(log, frame, cfg.flight_area, cfg.image_h, cfg.image_w));
        ds.labels.push_back(fingerprint::label_of(grid, ugv));
    }
    return ds;
}

std::pair<nn::CnnModel, fingerprint::TrainMetrics> train_cnn(const HarnessConfig& cfg,
                                                             std::uint64_t root_seed,
                                                             int scenario_id, int seed_index) {
    const ScenarioSpec scenario = cfg.scenario(scenario_id);
    channel::ChannelParams develop_channel = scenario.develop_env.channel;
    if (scenario.calibrated) {
        const auto report = calibrate_from_surrogate(cfg, root_seed, seed_index);
        develop_channel = calibrate::apply(report, develop_channel);
    }
    const auto ds = make_training_dataset(cfg, develop_channel, root_seed, scenario_id, seed_index);
    fingerprint::TrainConfig tc = cfg.train_cfg;
    tc.seed = Rng::derive(root_seed, {kSeedCnnTrain, static_cast<std::uint64_t>(scenario_id),
                                      static_cast<std::uint64_t>(seed_index)});
    return fingerprint::train(ds, cfg.grid(), tc);
}

namespace {

TrialResult evaluate_pf(const HarnessConfig& cfg, const ScenarioSpec& scenario,
                        const TrialSpec& trial, const measurement::MeasurementLog& log,
                        const calibrate::CalibrationReport* report, std::uint64_t root_seed,
                        int seed_index) {
    channel::ChannelParams model_params = scenario.develop_env.channel;
    pf::PfConfig pf_cfg = cfg.pf_cfg;
    if (scenario.calibrated) {
        model_params = calibrate::apply(*report, model_params);
        pf_cfg.meas_sigma_db = report->sigma_db;  // filter tuned to the fitted spread
    }
    const std::uint64_t seed =
        Rng::derive(root_seed, {kSeedPfRun, static_cast<std::uint64_t>(scenario.id),
                                static_cast<std::uint64_t>(trial.id),
                                static_cast<std::uint64_t>(seed_index)});
    const geo::EnuPosition truth = geo::to_enu(cfg.frame(), trial.ugv_truth);

    const auto t0 = std::chrono::steady_clock::now();
    const auto run = pf::run(log, model_params, pf_cfg, seed);
    const auto t1 = std::chrono::steady_clock::now();

    TrialResult r;
    r.estimator = "pf";
    r.scenario = scenario.id;
    r.trial = trial.id;
    r.error_m = geo::ground_distance(truth, run.estimate);
    r.runtime_s = std::chrono::duration<double>(t1 - t0).count();
    r.seed = seed;
    return r;
}

TrialResult evaluate_cnn(const HarnessConfig& cfg, const ScenarioSpec& scenario,
                         const TrialSpec& trial, const measurement::MeasurementLog& log,
                         const nn::CnnModel& model, std::uint64_t train_seed) {
    const geo::LocalFrame frame = cfg.frame();
    const geo::EnuPosition truth = geo::to_enu(frame, trial.ugv_truth);

    const auto t0 = std::chrono::steady_clock::now();
    const auto img = fingerprint::rasterize(log, frame, cfg.flight_area, cfg.image_h, cfg.image_w);
    const int cls = nn::predict_class(model, fingerprint::to_input_tensor(img));
    const geo::EnuPosition est = fingerprint::cell_center(cfg.grid(), cls);
    const auto t1 = std::chrono::steady_clock::now();

    TrialResult r;
    r.estimator = "cnn";
    r.scenario = scenario.id;
    r.trial = trial.id;
    r.error_m = geo::ground_distance(truth, est);
    r.runtime_s = std::chrono::duration<double>(t1 - t0).count();
    r.seed = train_seed;
    return r;
}

}  // namespace

std::vector<TrialResult> run_trial(const HarnessConfig& cfg, const std::string& estimator,
                                   int scenario_id, int trial_id, std::uint64_t root_seed,
                                   int n_seeds) {
    cfg.validate();
    const ScenarioSpec scenario = cfg.scenario(scenario_id);
    const TrialSpec& trial = cfg.trial(trial_id);

    std::vector<TrialResult> out;
    for (int k = 0; k < n_seeds; ++k) {
        try {
            const auto log = make_test_log(cfg, scenario, trial, root_seed, k);
            if (estimator == "pf") {
                calibrate::CalibrationReport report;
                if (scenario.calibrated) report = calibrate_from_surrogate(cfg, root_seed, k);
                out.push_back(evaluate_pf(cfg, scenario, trial, log,
                                          scenario.calibrated ? &report : nullptr, root_seed, k));
            } else if (estimator == "cnn") {
                const auto [model, metrics] = train_cnn(cfg, root_seed, scenario_id, k);
                const std::uint64_t train_seed =
                    Rng::derive(root_seed, {kSeedCnnTrain, static_cast<std::uint64_t>(scenario_id),
                                            static_cast<std::uint64_t>(k)});
                out.push_back(evaluate_cnn(cfg, scenario, trial, log, model, train_seed));
            } else {
                throw std::invalid_argument("unknown estimator '" + estimator + "'");
            }
        } catch (const std::exception& e) {
            // Partial results survive a bad seed.
            std::cerr << "rftwin: " << estimator << " s" << scenario_id << " t" << trial_id
                      << " seed " << k << " failed: " << e.what() << "\n";
        }
    }
    return out;
}

MatrixReport run_matrix(const HarnessConfig& cfg, std::uint64_t root_seed,
                        const std::filesystem::path& out_dir, bool check) {
    cfg.validate();
    const bool want_cnn = std::find(cfg.estimators.begin(), cfg.estimators.end(), "cnn") !=
                          cfg.estimators.end();
    const bool want_pf = std::find(cfg.estimators.begin(), cfg.estimators.end(), "pf") !=
                         cfg.estimators.end();
    const bool want_s3 = std::find(cfg.scenarios.begin(), cfg.scenarios.end(), 3) !=
                         cfg.scenarios.end();
    const auto n_seeds = static_cast<std::size_t>(cfg.n_seeds);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        if (cfg.write_logs) std::filesystem::create_directories(out_dir / "logs");
        if (want_s3) std::filesystem::create_directories(out_dir / "calib");
    }

    // Phase 1: calibration reports per seed (scenario 3 only).
    std::vector<calibrate::CalibrationReport> reports(want_s3 ? n_seeds : 0);
    std::vector<std::string> report_errors(reports.size());
    if (want_s3) {
        parallel_for(n_seeds, cfg.threads, [&](std::size_t k) {
            try {
                reports[k] = calibrate_from_surrogate(cfg, root_seed, static_cast<int>(k));
            } catch (const std::exception& e) {
                report_errors[k] = e.what();
            }
        });
        for (std::size_t k = 0; k < reports.size(); ++k) {
            if (!report_errors[k].empty())
                std::cerr << "rftwin: calibration seed " << k << " failed: " << report_errors[k]
                          << "\n";
            else if (!out_dir.empty())
                calibrate::write_report(reports[k],
                                        out_dir / "calib" /
                                            ("report_seed" + std::to_string(k) + ".txt"));
        }
    }

    // Phase 2: one Finger-CNN per (scenario, seed); trials share the model.
    struct TrainedModel {
        nn::CnnModel model;
        std::uint64_t seed = 0;
        std::string error;
        bool ok = false;
    };
    std::vector<TrainedModel> models;
    if (want_cnn) {
        models.resize(cfg.scenarios.size() * n_seeds);
        parallel_for(models.size(), cfg.threads, [&](std::size_t j) {
            const int scenario_id = cfg.scenarios[j / n_seeds];
            const int k = static_cast<int>(j % n_seeds);
            auto& slot = models[j];
            try {
                if (cfg.scenario(scenario_id).calibrated &&
                    !report_errors[static_cast<std::size_t>(k)].empty())
                    throw std::runtime_error("calibration failed for this seed");
                auto [model, metrics] = train_cnn(cfg, root_seed, scenario_id, k);
                slot.model = std::move(model);
                slot.seed = Rng::derive(root_seed,
                                        {kSeedCnnTrain, static_cast<std::uint64_t>(scenario_id),
                                         static_cast<std::uint64_t>(k)});
                slot.ok = true;
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        });
    }

    // Phase 3: per (scenario, trial, seed): one shared test log, both estimators.
    struct CellJob {
        std::size_t scenario_pos;
        std::size_t trial_pos;
        std::size_t seed_index;
    };
    std::vector<CellJob> jobs;
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s)
        for (std::size_t t = 0; t < cfg.trials.size(); ++t)
            for (std::size_t k = 0; k < n_seeds; ++k) jobs.push_back({s, t, k});

    struct JobOutput {
        std::optional<TrialResult> pf;
        std::optional<TrialResult> cnn;
        std::string error;
    };
    std::vector<JobOutput> outputs(jobs.size());

    parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
        const CellJob& job = jobs[j];
        const int scenario_id = cfg.scenarios[job.scenario_pos];
        const ScenarioSpec scenario = cfg.scenario(scenario_id);
        const TrialSpec& trial = cfg.trials[job.trial_pos];
        const int k = static_cast<int>(job.seed_index);
        auto& out = outputs[j];
        try {
            const auto log = make_test_log(cfg, scenario, trial, root_seed, k);
            if (!out_dir.empty() && cfg.write_logs) {
                const std::string name = "s" + std::to_string(scenario_id) + "_t" +
                                         std::to_string(trial.id) + "_k" + std::to_string(k) +
                                         ".csv";
                measurement::write_csv(log, out_dir / "logs" / name);
            }
            if (want_pf) {
                const calibrate::CalibrationReport* report = nullptr;
                if (scenario.calibrated) {
                    if (!report_errors[job.seed_index].empty())
                        throw std::runtime_error("calibration failed for this seed");
                    report = &reports[job.seed_index];
                }
                out.pf = evaluate_pf(cfg, scenario, trial, log, report, root_seed, k);
            }
            if (want_cnn) {
                const auto& slot = models[job.scenario_pos * n_seeds + job.seed_index];
                if (!slot.ok) throw std::runtime_error("cnn training failed: " + slot.error);
                out.cnn = evaluate_cnn(cfg, scenario, trial, log, slot.model, slot.seed);
            }
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });

    MatrixReport report;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (!outputs[j].error.empty()) {
            const CellJob& job = jobs[j];
            std::cerr << "rftwin: matrix cell s" << cfg.scenarios[job.scenario_pos] << " t"
                      << cfg.trials[job.trial_pos].id << " seed " << job.seed_index
                      << " failed: " << outputs[j].error << "\n";
        }
    }
    // Deterministic assembly order: estimator, scenario, trial, seed.
    for (const auto& estimator : cfg.estimators) {
        for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
            for (std::size_t t = 0; t < cfg.trials.size(); ++t) {
                MatrixCell cell;
                cell.estimator = estimator;
                cell.scenario = cfg.scenarios[s];
                cell.trial = cfg.trials[t].id;
                for (std::size_t k = 0; k < n_seeds; ++k) {
                    const std::size_t j = (s * cfg.trials.size() + t) * n_seeds + k;
                    const auto& result = estimator == "pf" ? outputs[j].pf : outputs[j].cnn;
                    if (!result) continue;
                    report.results.push_back(*result);
                    cell.errors_m.push_back(result->error_m);
                }
                if (cell.errors_m.empty())
                    throw std::runtime_error("matrix cell " + estimator + "/s" +
                                             std::to_string(cell.scenario) + "/t" +
                                             std::to_string(cell.trial) +
                                             " produced no results");
                cell.n_seeds = static_cast<int>(cell.errors_m.size());
                cell.median_error_m = median(cell.errors_m);
                cell.iqr_m = interquartile_range(cell.errors_m);
                report.cells.push_back(std::move(cell));
            }
        }
    }

    if (check) report.ordering_failures = check_orderings(report.cells);

    if (!out_dir.empty()) {
        write_matrix_csv(report, out_dir / "matrix.csv");
        write_matrix_json(report, out_dir / "matrix.json");
        // Wall-clock timings are diagnostics, not primary outputs.
        std::string timings = "estimator,scenario,trial,seed,runtime_s\n";
        for (const auto& r : report.results) {
            timings += r.estimator + "," + std::to_string(r.scenario) + "," +
                       std::to_string(r.trial) + "," + std::to_string(r.seed) + "," +
                       format_g10(r.runtime_s) + "\n";
        }
        write_text_file(out_dir / "timings.csv", timings);
    }
    return report;
}

std::vector<std::string> check_orderings(const std::vector<MatrixCell>& cells) {
    const auto find_cell = [&](const std::string& est, int s, int t) -> const MatrixCell* {
        for (const auto& c : cells)
            if (c.estimator == est && c.scenario == s && c.trial == t) return &c;
        return nullptr;
    };

    std::vector<std::string> failures;
    const auto fail = [&](const std::string& msg) { failures.push_back(msg); };

    // Ordering A: calibration beats the uncalibrated RW test everywhere.
    for (const auto& est : {std::string("pf"), std::string("cnn")}) {
        for (int trial = 1; trial <= 3; ++trial) {
            const auto* s2 = find_cell(est, 2, trial);
            const auto* s3 = find_cell(est, 3, trial);
            if (!s2 || !s3) continue;
            if (!(s3->median_error_m < s2->median_error_m))
                fail("ordering A: " + est + " trial " + std::to_string(trial) +
                     ": scenario-3 median " + format_g10(s3->median_error_m) +
                     " !< scenario-2 median " + format_g10(s2->median_error_m));
        }
    }
    // Ordering B: out-of-area trial favors the PF in scenario 2.
    {
        const auto* cnn = find_cell("cnn", 2, 3);
        const auto* pf = find_cell("pf", 2, 3);
        if (cnn && pf && !(cnn->median_error_m > pf->median_error_m))
            fail("ordering B: scenario-2 trial-3 cnn median " + format_g10(cnn->median_error_m) +
                 " !> pf median " + format_g10(pf->median_error_m));
    }
    // Ordering C: the CNN's in-area trials beat its out-of-area trial.
    for (int trial = 1; trial <= 2; ++trial) {
        const auto* in_area = find_cell("cnn", 2, trial);
        const auto* out_area = find_cell("cnn", 2, 3);
        if (in_area && out_area && !(in_area->median_error_m < out_area->median_error_m))
            fail("ordering C: cnn scenario-2 trial " + std::to_string(trial) + " median " +
                 format_g10(in_area->median_error_m) + " !< trial-3 median " +
                 format_g10(out_area->median_error_m));
    }
    return failures;
}

void write_matrix_csv(const MatrixReport& report, const std::filesystem::path& path) {
    std::string out = "estimator,scenario,trial,median_error_m,iqr_m,n_seeds\n";
    for (const auto& c : report.cells) {
        out += c.estimator + "," + std::to_string(c.scenario) + "," + std::to_string(c.trial) +
               "," + format_g10(c.median_error_m) + "," + format_g10(c.iqr_m) + "," +
               std::to_string(c.n_seeds) + "\n";
    }
    write_text_file(path, out);
}

void write_matrix_json(const MatrixReport& report, const std::filesystem::path& path) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
        cells.push_back({
            {"estimator", c.estimator},
            {"scenario", c.scenario},
            {"trial", c.trial},
            {"median_error_m", c.median_error_m},
            {"iqr_m", c.iqr_m},
            {"n_seeds", c.n_seeds},
            {"errors_m", c.errors_m},
        });
    }
    nlohmann::json j;
    j["cells"] = cells;
    j["ordering_failures"] = report.ordering_failures;
    write_text_file(path, j.dump(2) + "\n");
}

void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const config::ConfigMap& resolved_config, std::uint64_t seed) {
    nlohmann::json j;
    j["tool"] = "rftwin";
    j["version"] = kVersion;
    j["command"] = command;
    j["config_hash"] = to_hex(fnv1a64(config::dump(resolved_config)));
    j["seed"] = seed;
    j["formats"] = {{"log_csv", kLogFormatVersion},
                    {"model_bin", kModelFormatVersion},
                    {"report", kReportFormatVersion}};
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace rftwin::harness
