#include "rftwin/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin::calibrate {

namespace {

double fitted_rssi_dbm(const CalibrationReport& r, double d_m) {
    return r.offset_db - 10.0 * r.exponent_n * std::log10(std::max(d_m, 1e-6));
}

/// Linear-interpolated quantile of a sorted vector, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double f = pos - static_cast<double>(lo);
    return sorted[lo] + f * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

CalibrationReport fit_log_distance(const std::vector<measurement::MeasurementLog>& logs,
                                   const std::vector<geo::GeoPosition>& ugv_truths) {
    if (logs.empty() || logs.size() != ugv_truths.size())
        throw std::invalid_argument("calibration needs one ground truth per log");

    // Pooled regressor x = -10 log10(d_3d), response y = rssi.
    std::vector<double> xs, ys;
    double d_min = 1e300, d_max = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        const geo::LocalFrame frame = logs[i].frame();
        const geo::EnuPosition tx = geo::to_enu(frame, ugv_truths[i]);
        for (const auto& s : logs[i].samples) {
            const double d = geo::distance_3d(tx, geo::to_enu(frame, s.pos));
            if (!(d > 1.0))
                throw std::invalid_argument("calibration requires all distances > 1 m");
            d_min = std::min(d_min, d);
            d_max = std::max(d_max, d);
            xs.push_back(-10.0 * std::log10(d));
            ys.push_back(s.rssi_dbm);
        }
    }
    const auto n = xs.size();
    if (n < 50)
        throw std::invalid_argument("calibration needs at least 50 pooled samples, got " +
                                    std::to_string(n));
    if (d_max / d_min < 1.05)
        throw std::invalid_argument("distance spread below 5%: path-loss slope unidentifiable");

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += xs[i];
        mean_y += ys[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mean_x;
        const double dy = ys[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }

    CalibrationReport report;
    report.exponent_n = sxy / sxx;  // slope in y = offset + n * x
    report.offset_db = mean_y - report.exponent_n * mean_x;
    report.n_samples = static_cast<int>(n);

    std::vector<double> residuals(n);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        residuals[i] = ys[i] - (report.offset_db + report.exponent_n * xs[i]);
        ssr += residuals[i] * residuals[i];
    }
    report.sigma_db = std::sqrt(ssr / static_cast<double>(n - 2));
    report.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;

    std::sort(residuals.begin(), residuals.end());
    report.fade_depth_p999_db = std::max(0.0, -quantile_sorted(residuals, 0.001));

    if (!(report.exponent_n >= 1.5 && report.exponent_n <= 6.0))
        throw std::invalid_argument("fitted exponent " + format_g10(report.exponent_n) +
                                    " outside the plausible [1.5, 6] range");
    return report;
}

channel::ChannelParams apply(const CalibrationReport& report,
                             const channel::ChannelParams& params) {
    channel::ChannelParams out = params;
    out.override_model = channel::LogDistanceModel{
        report.offset_db - params.tx_power_dbm, report.exponent_n};
    out.excess_exponent_n = 0.0;  // the fitted exponent already carries any tilt

    // Split the residual variance between the correlated deep-fade component
    // and i.i.d. shadowing so the marginal std stays sigma_db. A Gaussian
    // marginal cannot dip below z * sigma, so the depth is capped there.
    const double sigma_corr =
        std::min(report.sigma_db, report.fade_depth_p999_db / channel::kDeepFadeZ);
    const double depth = channel::kDeepFadeZ * sigma_corr;
    const double sigma_iid =
        std::sqrt(std::max(0.0, report.sigma_db * report.sigma_db - sigma_corr * sigma_corr));
    out.fade = channel::FadeModel::composite(sigma_iid, depth, params.fade.spatial_rate_per_m);
    return out;
}

std::vector<ResidualRow> residual_trace(const measurement::MeasurementLog& log,
                                        const CalibrationReport& report,
                                        const geo::GeoPosition& ugv_truth) {
    const geo::LocalFrame frame = log.frame();
    const geo::EnuPosition tx = geo::to_enu(frame, ugv_truth);
    std::vector<ResidualRow> rows;
    rows.reserve(log.samples.size());
    for (const auto& s : log.samples) {
        ResidualRow row;
        row.t_s = s.t_s;
        row.distance_m = geo::distance_3d(tx, geo::to_enu(frame, s.pos));
        row.measured_dbm = s.rssi_dbm;
        row.residual_db = s.rssi_dbm - fitted_rssi_dbm(report, row.distance_m);
        rows.push_back(row);
    }
    return rows;
}

void write_residual_csv(const std::vector<ResidualRow>& rows,
                        const std::filesystem::path& path) {
    std::string out = "t_s,distance_m,rssi_dbm,residual_db\n";
    for (const auto& r : rows) {
        out += format_g10(r.t_s);
        out += ',';
        out += format_g10(r.distance_m);
        out += ',';
        out += format_g10(r.measured_dbm);
        out += ',';
        out += format_g10(r.residual_db);
        out += '\n';
    }
    write_text_file(path, out);
}

void write_report(const CalibrationReport& report, const std::filesystem::path& path) {
    std::string out;
    out += "offset_db=" + format_exact(report.offset_db) + "\n";
    out += "exponent_n=" + format_exact(report.exponent_n) + "\n";
    out += "sigma_db=" + format_exact(report.sigma_db) + "\n";
    out += "fade_depth_p999_db=" + format_exact(report.fade_depth_p999_db) + "\n";
    out += "n_samples=" + std::to_string(report.n_samples) + "\n";
    out += "r_squared=" + format_exact(report.r_squared) + "\n";
    write_text_file(path, out);
}

CalibrationReport read_report(const std::filesystem::path& path) {
    const auto map = config::parse_string(read_text_file(path));
    CalibrationReport r;
    const auto need = [&](const char* key) {
        const auto it = map.find(key);
        if (it == map.end())
            throw std::runtime_error(path.string() + ": missing report key '" + key + "'");
        return parse_double(it->second, path.string() + " key " + key);
    };
    r.offset_db = need("offset_db");
    r.exponent_n = need("exponent_n");
    r.sigma_db = need("sigma_db");
    r.fade_depth_p999_db = need("fade_depth_p999_db");
    r.n_samples = static_cast<int>(need("n_samples"));
    r.r_squared = need("r_squared");
    return r;
}

}  // namespace rftwin::calibrate
