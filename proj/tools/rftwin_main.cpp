// rftwin CLI: simulate | train | localize | calibrate | eval | matrix.
// Every subcommand is deterministic for a fixed --seed and --config and
// writes a manifest beside its outputs.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rftwin/calibrate.hpp"
#include "rftwin/harness.hpp"
#include "rftwin/io_util.hpp"
#include "rftwin/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rftwin;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int threads = 0;
};

harness::HarnessConfig load_config(const GlobalArgs& g) {
    config::ConfigMap map;
    if (!g.config_path.empty()) map = config::parse_file(g.config_path);
    auto cfg = harness::HarnessConfig::from_config(map);
    if (g.threads > 0) cfg.threads = g.threads;
    return cfg;
}

geo::GeoPosition parse_geo(const std::string& text, const std::string& what) {
    const auto parts = split(text, ',');
    if (parts.size() != 3)
        throw std::invalid_argument(what + ": expected 'lat,lon,alt', got '" + text + "'");
    return {parse_double(parts[0], what + " lat"), parse_double(parts[1], what + " lon"),
            parse_double(parts[2], what + " alt")};
}

void write_run_manifest(const harness::HarnessConfig& cfg, const GlobalArgs& g,
                        const std::string& command) {
    fs::create_directories(g.out_dir);
    harness::write_manifest(fs::path(g.out_dir) / "manifest.json", command, cfg.to_config(),
                            g.seed);
}

int cmd_simulate(const GlobalArgs& g, const std::string& env, int trial_id,
                 const std::string& ugv_text, const std::string& out_name) {
    const auto cfg = load_config(g);
    const bool rw = env == "rw";
    const channel::ChannelParams& params = rw ? cfg.rw_channel : cfg.dt_channel;
    const std::string tag = rw ? "RW-surrogate" : "DT";
    const geo::GeoPosition ugv =
        ugv_text.empty() ? cfg.trial(trial_id).ugv_truth : parse_geo(ugv_text, "--ugv");

    const auto log = measurement::generate_log(cfg.mission(), cfg.frame(), ugv, params,
                                               cfg.rate_hz, g.seed, tag);
    fs::create_directories(g.out_dir);
    const fs::path log_path = fs::path(g.out_dir) / out_name;
    measurement::write_csv(log, log_path);
    write_run_manifest(cfg, g, "simulate");
    std::cout << "wrote " << log_path.string() << " (" << log.samples.size() << " samples, env "
              << tag << ")\n";
    return 0;
}

int cmd_train(const GlobalArgs& g, int scenario_id, const std::string& dataset_dir) {
    const auto cfg = load_config(g);
    const auto scenario = cfg.scenario(scenario_id);

    channel::ChannelParams develop_channel = scenario.develop_env.channel;
    if (scenario.calibrated) {
        const auto report = harness::calibrate_from_surrogate(cfg, g.seed, 0);
        develop_channel = calibrate::apply(report, develop_channel);
        fs::create_directories(g.out_dir);
        calibrate::write_report(report, fs::path(g.out_dir) / "calibration_report.txt");
    }
    const auto ds = harness::make_training_dataset(cfg, develop_channel, g.seed, scenario_id, 0);
    if (!dataset_dir.empty()) fingerprint::write_dataset(ds, dataset_dir);

    fingerprint::TrainConfig tc = cfg.train_cfg;
    tc.seed = Rng::derive(g.seed, {harness::kSeedCnnTrain,
                                   static_cast<std::uint64_t>(scenario_id), 0});
    auto [model, metrics] = fingerprint::train(ds, cfg.grid(), tc);

    fs::create_directories(g.out_dir);
    nn::save_model(model, fs::path(g.out_dir) / "model.bin");
    fingerprint::write_metrics_json(metrics, fs::path(g.out_dir) / "metrics.json");
    write_run_manifest(cfg, g, "train");
    std::cout << "trained scenario-" << scenario_id << " model: best val accuracy "
              << metrics.best_val_accuracy << " (epoch " << metrics.best_epoch
              << "), test accuracy " << metrics.test_accuracy << "\n"
              << "wrote " << (fs::path(g.out_dir) / "model.bin").string() << "\n";
    return 0;
}

struct LocalizeArgs {
    std::string estimator;
    std::string log_path;
    std::string model_path;
    std::string report_path;
    std::string env = "dt";
    std::string truth_text;
};

json localize_once(const harness::HarnessConfig& cfg, const GlobalArgs& g,
                   const LocalizeArgs& a) {
    const auto log = measurement::read_csv(a.log_path);
    const geo::LocalFrame frame = log.frame();
    std::optional<geo::EnuPosition> truth;
    if (!a.truth_text.empty())
        truth = geo::to_enu(frame, parse_geo(a.truth_text, "--truth"));

    geo::EnuPosition est;
    if (a.estimator == "pf") {
        channel::ChannelParams params = a.env == "rw" ? cfg.rw_channel : cfg.dt_channel;
        pf::PfConfig pf_cfg = cfg.pf_cfg;
        if (!a.report_path.empty()) {
            const auto report = calibrate::read_report(a.report_path);
            params = calibrate::apply(report, params);
            pf_cfg.meas_sigma_db = report.sigma_db;
        }
        const auto run = pf::run(log, params, pf_cfg, g.seed, truth);
        est = run.estimate;
        fs::create_directories(g.out_dir);
        pf::write_trace_csv(run.trace, fs::path(g.out_dir) / "pf_trace.csv");
    } else if (a.estimator == "cnn") {
        if (a.model_path.empty())
            throw std::invalid_argument("--model is required for --estimator cnn");
        const auto model = nn::load_model(a.model_path);
        const auto img =
            fingerprint::rasterize(log, frame, cfg.flight_area, cfg.image_h, cfg.image_w);
        const int cls = nn::predict_class(model, fingerprint::to_input_tensor(img));
        est = fingerprint::cell_center(cfg.grid(), cls);
    } else {
        throw std::invalid_argument("--estimator must be pf or cnn");
    }

    const geo::GeoPosition est_geo = geo::to_geo(frame, est);
    json result;
    result["estimator"] = a.estimator;
    result["est_east_m"] = est.east_m;
    result["est_north_m"] = est.north_m;
    result["est_lat_deg"] = est_geo.lat_deg;
    result["est_lon_deg"] = est_geo.lon_deg;
    if (truth) result["error_m"] = geo::ground_distance(est, *truth);
    result["seed"] = g.seed;
    result["inputs"] = {{"log", a.log_path},
                        {"model", a.model_path},
                        {"report", a.report_path},
                        {"env", a.env},
                        {"truth", a.truth_text}};
    return result;
}

int cmd_localize(const GlobalArgs& g, const LocalizeArgs& a) {
    const auto cfg = load_config(g);
    const json result = localize_once(cfg, g, a);
    fs::create_directories(g.out_dir);
    write_text_file(fs::path(g.out_dir) / "result.json", result.dump(2) + "\n");
    write_run_manifest(cfg, g, "localize");
    std::cout << "estimate: east " << result["est_east_m"].get<double>() << " m, north "
              << result["est_north_m"].get<double>() << " m";
    if (result.contains("error_m"))
        std::cout << ", error " << result["error_m"].get<double>() << " m";
    std::cout << "\nwrote " << (fs::path(g.out_dir) / "result.json").string() << "\n";
    return 0;
}

int cmd_calibrate(const GlobalArgs& g, const std::vector<std::string>& log_paths,
                  const std::vector<std::string>& truth_texts, bool residuals) {
    if (log_paths.size() != truth_texts.size() || log_paths.empty())
        throw std::invalid_argument("calibrate needs matching --log/--truth pairs");
    const auto cfg = load_config(g);

    std::vector<measurement::MeasurementLog> logs;
    std::vector<geo::GeoPosition> truths;
    for (std::size_t i = 0; i < log_paths.size(); ++i) {
        logs.push_back(measurement::read_csv(log_paths[i]));
        truths.push_back(parse_geo(truth_texts[i], "--truth"));
    }
    const auto report = calibrate::fit_log_distance(logs, truths);

    fs::create_directories(g.out_dir);
    calibrate::write_report(report, fs::path(g.out_dir) / "report.txt");
    if (residuals) {
        for (std::size_t i = 0; i < logs.size(); ++i) {
            const auto rows = calibrate::residual_trace(logs[i], report, truths[i]);
            calibrate::write_residual_csv(
                rows, fs::path(g.out_dir) / ("residuals_" + std::to_string(i) + ".csv"));
        }
    }
    write_run_manifest(cfg, g, "calibrate");
    std::cout << "fit over " << report.n_samples << " samples: offset " << report.offset_db
              << " dB, exponent " << report.exponent_n << ", sigma " << report.sigma_db
              << " dB, r^2 " << report.r_squared << "\nwrote "
              << (fs::path(g.out_dir) / "report.txt").string() << "\n";
    return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& run_dir) {
    // Re-run the estimator recorded in result.json and verify bit-equality.
    const fs::path dir = run_dir.empty() ? fs::path(g.out_dir) : fs::path(run_dir);
    const json recorded = json::parse(read_text_file(dir / "result.json"));

    LocalizeArgs a;
    a.estimator = recorded.at("estimator").get<std::string>();
    const auto& inputs = recorded.at("inputs");
    a.log_path = inputs.at("log").get<std::string>();
    a.model_path = inputs.at("model").get<std::string>();
    a.report_path = inputs.at("report").get<std::string>();
    a.env = inputs.at("env").get<std::string>();
    a.truth_text = inputs.at("truth").get<std::string>();

    GlobalArgs replay = g;
    replay.seed = recorded.at("seed").get<std::uint64_t>();
    // Scratch output so the recorded run directory stays untouched.
    replay.out_dir = (dir / "eval_scratch").string();
    const auto cfg = load_config(replay);
    const json fresh = localize_once(cfg, replay, a);

    const bool match = fresh == recorded;
    if (match) {
        std::cout << "eval: reproduced recorded result";
        if (recorded.contains("error_m"))
            std::cout << " (error " << recorded["error_m"].get<double>() << " m)";
        std::cout << "\n";
        return 0;
    }
    std::cerr << "eval: MISMATCH\nrecorded: " << recorded.dump() << "\nfresh:    " << fresh.dump()
              << "\n";
    return 1;
}

int cmd_matrix(const GlobalArgs& g, bool check) {
    const auto cfg = load_config(g);
    const auto report = harness::run_matrix(cfg, g.seed, g.out_dir, check);
    write_run_manifest(cfg, g, "matrix");

    std::cout << "estimator scenario trial median_m iqr_m n\n";
    for (const auto& c : report.cells) {
        std::printf("%-9s %8d %5d %8.2f %5.2f %2d\n", c.estimator.c_str(), c.scenario, c.trial,
                    c.median_error_m, c.iqr_m, c.n_seeds);
    }
    if (check) {
        if (report.ordering_failures.empty()) {
            std::cout << "orderings: all hold\n";
        } else {
            for (const auto& f : report.ordering_failures) std::cerr << "FAIL " << f << "\n";
            return 1;
        }
    }
    std::cout << "wrote " << (fs::path(g.out_dir) / "matrix.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rftwin: desk-scale RF source-localization digital twin"};
    app.require_subcommand(1);
    app.fallthrough(true);
    app.set_version_flag("--version", std::string("rftwin ") + kVersion);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "flat key=value config file");
    app.add_option("--seed", g.seed, "root seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (0 = hardware)");

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic flight log");
    std::string sim_env = "dt";
    int sim_trial = 1;
    std::string sim_ugv;
    std::string sim_out = "log.csv";
    simulate->add_option("--env", sim_env, "environment: dt | rw")
        ->check(CLI::IsMember({"dt", "rw"}));
    simulate->add_option("--trial", sim_trial, "trial id for the transmitter truth")
        ->check(CLI::Range(1, 3));
    simulate->add_option("--ugv", sim_ugv, "explicit transmitter position 'lat,lon,alt'");
    simulate->add_option("--out", sim_out, "log file name")->capture_default_str();

    auto* train = app.add_subcommand("train", "train the fingerprint classifier");
    int train_scenario = 1;
    std::string train_dataset_dir;
    train->add_option("--scenario", train_scenario, "development scenario")
        ->check(CLI::Range(1, 3));
    train->add_option("--dataset-dir", train_dataset_dir,
                      "also persist the training dataset here");

    auto* localize = app.add_subcommand("localize", "estimate a transmitter from a log");
    LocalizeArgs loc;
    localize->add_option("--estimator", loc.estimator, "pf | cnn")
        ->required()
        ->check(CLI::IsMember({"pf", "cnn"}));
    localize->add_option("--log", loc.log_path, "measurement log CSV")->required();
    localize->add_option("--model", loc.model_path, "model file (cnn)");
    localize->add_option("--report", loc.report_path, "calibration report to apply (pf)");
    localize->add_option("--env", loc.env, "pf channel model: dt | rw")
        ->check(CLI::IsMember({"dt", "rw"}));
    localize->add_option("--truth", loc.truth_text, "ground truth 'lat,lon,alt' for error");

    auto* calibrate_cmd = app.add_subcommand("calibrate", "fit a path-loss model from logs");
    std::vector<std::string> cal_logs, cal_truths;
    bool cal_residuals = false;
    calibrate_cmd->add_option("--log", cal_logs, "measurement log CSV (repeatable)")->required();
    calibrate_cmd->add_option("--truth", cal_truths, "matching 'lat,lon,alt' (repeatable)")
        ->required();
    calibrate_cmd->add_flag("--residuals", cal_residuals, "write per-log residual traces");

    auto* eval = app.add_subcommand("eval", "re-run a localize result and verify it");
    std::string eval_dir;
    eval->add_option("--run-dir", eval_dir, "directory with result.json (default --out-dir)");

    auto* matrix = app.add_subcommand("matrix", "run the scenario x trial evaluation matrix");
    bool matrix_check = false;
    matrix->add_flag("--check", matrix_check, "fail unless the expected orderings hold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(g, sim_env, sim_trial, sim_ugv, sim_out);
        if (train->parsed()) return cmd_train(g, train_scenario, train_dataset_dir);
        if (localize->parsed()) return cmd_localize(g, loc);
        if (calibrate_cmd->parsed()) return cmd_calibrate(g, cal_logs, cal_truths, cal_residuals);
        if (eval->parsed()) return cmd_eval(g, eval_dir);
        if (matrix->parsed()) return cmd_matrix(g, matrix_check);
    } catch (const std::exception& e) {
        std::cerr << "rftwin: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
