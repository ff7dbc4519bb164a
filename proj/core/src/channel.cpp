#include "rftwin/channel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin::channel {

namespace {

constexpr double kPi = std::numbers::pi;

double amplitude_from_dbi(double dbi) { return std::pow(10.0, dbi / 20.0); }

struct RayGeometry {
    double d_los;
    double d_ref;
    double el_tx_los_deg;  // elevation of LOS ray leaving the TX
    double el_rx_los_deg;  // elevation of LOS ray arriving at the RX
    double el_ref_deg;     // reflected-ray elevation, same at both ends
};

RayGeometry ray_geometry(const geo::EnuPosition& tx, const geo::EnuPosition& rx) {
    const double gd = geo::ground_distance(tx, rx);
    const double ht = tx.up_m;
    const double hr = rx.up_m;
    RayGeometry g{};
    g.d_los = std::sqrt(gd * gd + (hr - ht) * (hr - ht));
    // Image of the TX mirrored through the up = 0 plane.
    g.d_ref = std::sqrt(gd * gd + (hr + ht) * (hr + ht));
    const double rad2deg = 180.0 / kPi;
    g.el_tx_los_deg = std::atan2(hr - ht, gd) * rad2deg;
    g.el_rx_los_deg = std::atan2(ht - hr, gd) * rad2deg;
    g.el_ref_deg = -std::atan2(ht + hr, gd) * rad2deg;
    return g;
}

void check_two_ray_geometry(const geo::EnuPosition& tx, const geo::EnuPosition& rx) {
    if (!(tx.up_m > 0.0) || !(rx.up_m > 0.0))
        throw std::invalid_argument("two-ray geometry requires positive antenna heights");
    if (!(geo::ground_distance(tx, rx) > 0.0))
        throw std::invalid_argument("two-ray geometry requires nonzero ground separation");
}

double log_distance_rssi_dbm(const LogDistanceModel& m, double tx_power_dbm, double d_m) {
    return tx_power_dbm + m.offset_db - 10.0 * m.exponent_n * std::log10(std::max(d_m, 1e-6));
}

}  // namespace

AntennaPattern AntennaPattern::isotropic() { return {{{-90.0, 0.0}, {90.0, 0.0}}}; }

AntennaPattern AntennaPattern::dipole() {
    // Half-wave dipole sampled every 15 degrees. The end-fire nulls are
    // clipped to -18 dBi: airframe tilt and finite ground planes fill them in
    // well before the theoretical null.
    return {{
        {-90.0, -18.0},
        {-75.0, -11.5},
        {-60.0, -5.4},
        {-45.0, -1.9},
        {-30.0, 0.4},
        {-15.0, 1.7},
        {0.0, 2.15},
        {15.0, 1.7},
        {30.0, 0.4},
        {45.0, -1.9},
        {60.0, -5.4},
        {75.0, -11.5},
        {90.0, -18.0},
    }};
}

std::string FadeModel::variant_name() const {
    if (is_none()) return "none";
    if (max_depth_db == 0.0) return "log_normal";
    if (sigma_db == 0.0) return "deep_fade";
    return "composite";
}

void FadeModel::validate() const {
    if (!(sigma_db >= 0.0)) throw std::invalid_argument("fade sigma_db must be >= 0");
    if (!(max_depth_db >= 0.0 && max_depth_db <= 80.0))
        throw std::invalid_argument("fade max_depth_db must be in [0, 80]");
    if (!(spatial_rate_per_m > 0.0))
        throw std::invalid_argument("fade spatial_rate_per_m must be > 0");
}

void ChannelParams::validate() const {
    if (!(carrier_hz > 0.0)) throw std::invalid_argument("carrier_hz must be > 0");
    if (!(std::abs(reflection_coeff) <= 1.0 + 1e-12))
        throw std::invalid_argument("|reflection_coeff| must be <= 1");
    fade.validate();
    if (override_model) {
        if (!(override_model->exponent_n >= 1.5 && override_model->exponent_n <= 6.0))
            throw std::invalid_argument("override exponent_n must be in [1.5, 6]");
    }
    if (tx_pattern.gain_table.size() < 2 || rx_pattern.gain_table.size() < 2)
        throw std::invalid_argument("antenna pattern needs at least two knots");
}

double friis_gain_db(double distance_m, double carrier_hz) {
    if (!(distance_m > 0.0)) throw std::invalid_argument("friis distance must be > 0");
    if (!(carrier_hz > 0.0)) throw std::invalid_argument("carrier_hz must be > 0");
    const double lambda = kSpeedOfLightMps / carrier_hz;
    return -20.0 * std::log10(4.0 * kPi * distance_m / lambda);
}

double antenna_gain_db(const AntennaPattern& pattern, double elevation_deg) {
    const auto& table = pattern.gain_table;
    if (table.size() < 2) throw std::invalid_argument("antenna pattern needs at least two knots");
    if (elevation_deg < table.front().first || elevation_deg > table.back().first) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true))
            std::cerr << "rftwin: antenna elevation " << elevation_deg
                      << " deg outside pattern table, clamping\n";
        elevation_deg = std::clamp(elevation_deg, table.front().first, table.back().first);
    }
    auto hi = std::lower_bound(table.begin(), table.end(), elevation_deg,
                               [](const auto& knot, double v) { return knot.first < v; });
    if (hi == table.begin()) return hi->second;
    if (hi == table.end()) return (hi - 1)->second;
    const auto lo = hi - 1;
    const double t = (elevation_deg - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
}

double two_ray_gain_db(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                       const ChannelParams& params) {
    check_two_ray_geometry(tx, rx);
    const RayGeometry g = ray_geometry(tx, rx);
    const double lambda = kSpeedOfLightMps / params.carrier_hz;

    // Amplitude (voltage) gains; each ray sees both ends' patterns.
    const double a_los = amplitude_from_dbi(antenna_gain_db(params.tx_pattern, g.el_tx_los_deg)) *
                         amplitude_from_dbi(antenna_gain_db(params.rx_pattern, g.el_rx_los_deg));
    const double a_ref = amplitude_from_dbi(antenna_gain_db(params.tx_pattern, g.el_ref_deg)) *
                         amplitude_from_dbi(antenna_gain_db(params.rx_pattern, g.el_ref_deg));

    const double phase = 2.0 * kPi * (g.d_ref - g.d_los) / lambda;
    const std::complex<double> field =
        a_los / g.d_los +
        params.reflection_coeff * a_ref * std::exp(std::complex<double>(0.0, -phase)) / g.d_ref;

    const double magnitude = (lambda / (4.0 * kPi)) * std::abs(field);
    if (!(magnitude > 0.0)) return kGainFloorDb;
    return std::max(20.0 * std::log10(magnitude), kGainFloorDb);
}

double mean_rssi_dbm(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                     const ChannelParams& params) {
    double rssi;
    if (params.override_model) {
        rssi = log_distance_rssi_dbm(*params.override_model, params.tx_power_dbm,
                                     geo::distance_3d(tx, rx));
    } else {
        rssi = params.tx_power_dbm + two_ray_gain_db(tx, rx, params);
    }
    if (params.excess_exponent_n != 0.0) {
        const double d = std::max(geo::distance_3d(tx, rx), 1.0);
        rssi -= 10.0 * params.excess_exponent_n * std::log10(d);
    }
    return rssi;
}

FadeProcess::FadeProcess(const FadeModel& model) : model_(model) {
    model_.validate();
    deep_sigma_db_ = model_.max_depth_db / kDeepFadeZ;
}

double FadeProcess::draw(Rng& rng, const geo::EnuPosition& pos) {
    double value = 0.0;
    if (deep_sigma_db_ > 0.0) {
        const double innovation = rng.normal(0.0, deep_sigma_db_);
        if (!primed_) {
            deep_value_db_ = innovation;
            primed_ = true;
        } else {
            // Stationary AR(1) in traversed distance: marginal stays N(0, sigma).
            const double step = geo::distance_3d(pos, last_pos_);
            const double a = std::exp(-step * model_.spatial_rate_per_m);
            deep_value_db_ = a * deep_value_db_ + std::sqrt(1.0 - a * a) * innovation;
        }
        value += deep_value_db_;
    }
    if (model_.sigma_db > 0.0) value += rng.normal(0.0, model_.sigma_db);
    last_pos_ = pos;
    return value;
}

double sample_rssi_dbm(const geo::EnuPosition& tx, const geo::EnuPosition& rx,
                       const ChannelParams& params, FadeProcess& fade, Rng& rng) {
    const double rssi = mean_rssi_dbm(tx, rx, params) + fade.draw(rng, rx);
    return std::max(rssi, kNoiseFloorDbm);
}

namespace {

AntennaPattern pattern_from_name(const std::string& name, const AntennaPattern& fallback) {
    if (name == "isotropic") return AntennaPattern::isotropic();
    if (name == "dipole") return AntennaPattern::dipole();
    if (name == "default") return fallback;
    throw std::invalid_argument("unknown antenna pattern '" + name + "'");
}

std::string pattern_name(const AntennaPattern& p) {
    if (p.gain_table == AntennaPattern::isotropic().gain_table) return "isotropic";
    if (p.gain_table == AntennaPattern::dipole().gain_table) return "dipole";
    return "default";
}

}  // namespace

void to_config(const ChannelParams& params, config::ConfigMap& map, const std::string& prefix) {
    map[prefix + "carrier_hz"] = format_exact(params.carrier_hz);
    map[prefix + "tx_power_dbm"] = format_exact(params.tx_power_dbm);
    map[prefix + "reflection_coeff_re"] = format_exact(params.reflection_coeff.real());
    map[prefix + "reflection_coeff_im"] = format_exact(params.reflection_coeff.imag());
    map[prefix + "fade.variant"] = params.fade.variant_name();
    map[prefix + "fade.sigma_db"] = format_exact(params.fade.sigma_db);
    map[prefix + "fade.max_depth_db"] = format_exact(params.fade.max_depth_db);
    map[prefix + "fade.spatial_rate_per_m"] = format_exact(params.fade.spatial_rate_per_m);
    if (params.override_model) {
        map[prefix + "override.offset_db"] = format_exact(params.override_model->offset_db);
        map[prefix + "override.exponent_n"] = format_exact(params.override_model->exponent_n);
    }
    map[prefix + "excess_exponent_n"] = format_exact(params.excess_exponent_n);
    map[prefix + "tx_pattern"] = pattern_name(params.tx_pattern);
    map[prefix + "rx_pattern"] = pattern_name(params.rx_pattern);
}

ChannelParams from_config(const config::ConfigMap& map, const std::string& prefix,
                          const ChannelParams& defaults) {
    ChannelParams p = defaults;
    p.carrier_hz = config::get_double(map, prefix + "carrier_hz", p.carrier_hz);
    p.tx_power_dbm = config::get_double(map, prefix + "tx_power_dbm", p.tx_power_dbm);
    p.reflection_coeff = {
        config::get_double(map, prefix + "reflection_coeff_re", p.reflection_coeff.real()),
        config::get_double(map, prefix + "reflection_coeff_im", p.reflection_coeff.imag())};

    const std::string variant =
        config::get_string(map, prefix + "fade.variant", p.fade.variant_name());
    FadeModel fade = p.fade;
    fade.sigma_db = config::get_double(map, prefix + "fade.sigma_db", fade.sigma_db);
    fade.max_depth_db = config::get_double(map, prefix + "fade.max_depth_db", fade.max_depth_db);
    fade.spatial_rate_per_m =
        config::get_double(map, prefix + "fade.spatial_rate_per_m", fade.spatial_rate_per_m);
    if (variant == "none") {
        fade.sigma_db = 0.0;
        fade.max_depth_db = 0.0;
    } else if (variant == "log_normal") {
        fade.max_depth_db = 0.0;
    } else if (variant == "deep_fade") {
        fade.sigma_db = 0.0;
    } else if (variant != "composite") {
        throw std::invalid_argument("config key " + prefix + "fade.variant: unknown variant '" +
                                    variant + "'");
    }
    p.fade = fade;

    const bool has_offset = map.count(prefix + "override.offset_db") > 0;
    const bool has_exponent = map.count(prefix + "override.exponent_n") > 0;
    if (has_offset != has_exponent)
        throw std::invalid_argument("config: override.offset_db and override.exponent_n "
                                    "must be set together");
    if (has_offset) {
        p.override_model = LogDistanceModel{
            config::get_double(map, prefix + "override.offset_db", 0.0),
            config::get_double(map, prefix + "override.exponent_n", 2.0)};
    }
    p.excess_exponent_n =
        config::get_double(map, prefix + "excess_exponent_n", p.excess_exponent_n);
    p.tx_pattern = pattern_from_name(
        config::get_string(map, prefix + "tx_pattern", pattern_name(p.tx_pattern)), p.tx_pattern);
    p.rx_pattern = pattern_from_name(
        config::get_string(map, prefix + "rx_pattern", pattern_name(p.rx_pattern)), p.rx_pattern);
    p.validate();
    return p;
}

std::string channel_id(const ChannelParams& params, const std::string& tag) {
    config::ConfigMap map;
    to_config(params, map, "");
    return tag + "-" + to_hex(fnv1a64(config::dump(map))).substr(8);
}

}  // namespace rftwin::channel
