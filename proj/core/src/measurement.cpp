#include "rftwin/measurement.hpp"

#include <sstream>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin::measurement {

namespace {

constexpr const char* kHeader = "t_s,lat_deg,lon_deg,alt_m,rssi_dbm";

void validate_log(const MeasurementLog& log, const std::string& where) {
    if (log.samples.empty()) throw std::runtime_error(where + ": empty log");
    double prev_t = -1.0;
    for (const auto& s : log.samples) {
        if (s.t_s < prev_t) throw std::runtime_error(where + ": time goes backward");
        prev_t = s.t_s;
        if (!(s.rssi_dbm >= channel::kNoiseFloorDbm && s.rssi_dbm <= 30.0))
            throw std::runtime_error(where + ": rssi out of [-120, 30] dBm");
    }
}

}  // namespace

MeasurementLog generate_log(const vehicle::Trajectory& traj, const geo::LocalFrame& frame,
                            const geo::GeoPosition& ugv, const channel::ChannelParams& params,
                            double rate_hz, std::uint64_t seed, const std::string& env_tag) {
    params.validate();
    const auto route = vehicle::compile(traj, frame);
    const auto positions = vehicle::sample_positions(route, rate_hz);
    const geo::EnuPosition tx = geo::to_enu(frame, ugv);

    MeasurementLog log;
    log.meta.frame_origin = frame.origin;
    log.meta.channel_id = channel::channel_id(params, env_tag);
    log.meta.seed = seed;
    log.meta.env_tag = env_tag;
    log.samples.reserve(positions.size());

    Rng rng(seed);
    channel::FadeProcess fade(params.fade);
    for (const auto& [t, rx] : positions) {
        RssiSample s;
        s.t_s = t;
        s.pos = geo::to_geo(frame, rx);
        s.rssi_dbm = channel::sample_rssi_dbm(tx, rx, params, fade, rng);
        log.samples.push_back(s);
    }
    return log;
}

std::string to_csv(const MeasurementLog& log) {
    validate_log(log, "log");
    std::string out;
    out += "#frame_origin_lat=" + format_g10(log.meta.frame_origin.lat_deg) + "\n";
    out += "#frame_origin_lon=" + format_g10(log.meta.frame_origin.lon_deg) + "\n";
    out += "#env_tag=" + log.meta.env_tag + "\n";
    out += "#seed=" + std::to_string(log.meta.seed) + "\n";
    out += "#channel_id=" + log.meta.channel_id + "\n";
    out += kHeader;
    out += '\n';
    for (const auto& s : log.samples) {
        out += format_g10(s.t_s);
        out += ',';
        out += format_g10(s.pos.lat_deg);
        out += ',';
        out += format_g10(s.pos.lon_deg);
        out += ',';
        out += format_g10(s.pos.alt_m);
        out += ',';
        out += format_g10(s.rssi_dbm);
        out += '\n';
    }
    return out;
}

MeasurementLog from_csv(const std::string& text, const std::string& where) {
    MeasurementLog log;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    double prev_t = -1.0;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string body{trim(line)};
        if (body.empty()) continue;
        const std::string at = where + " line " + std::to_string(line_no);

        if (body.front() == '#') {
            const auto eq = body.find('=');
            if (eq == std::string::npos) continue;  // plain comment
            const std::string key = body.substr(1, eq - 1);
            const std::string value = body.substr(eq + 1);
            if (key == "frame_origin_lat")
                log.meta.frame_origin.lat_deg = parse_double(value, at);
            else if (key == "frame_origin_lon")
                log.meta.frame_origin.lon_deg = parse_double(value, at);
            else if (key == "env_tag")
                log.meta.env_tag = value;
            else if (key == "seed")
                log.meta.seed = static_cast<std::uint64_t>(parse_int(value, at));
            else if (key == "channel_id")
                log.meta.channel_id = value;
            // Unknown metadata keys are ignored so external logs can carry extras.
            continue;
        }
        if (!saw_header) {
            if (body != kHeader)
                throw std::runtime_error(at + ": expected header '" + kHeader + "'");
            saw_header = true;
            continue;
        }
        const auto fields = split(body, ',');
        if (fields.size() != 5)
            throw std::runtime_error(at + ": expected 5 comma-separated fields, got " +
                                     std::to_string(fields.size()));
        RssiSample s;
        try {
            s.t_s = parse_double(fields[0], at + " t_s");
            s.pos.lat_deg = parse_double(fields[1], at + " lat_deg");
            s.pos.lon_deg = parse_double(fields[2], at + " lon_deg");
            s.pos.alt_m = parse_double(fields[3], at + " alt_m");
            s.rssi_dbm = parse_double(fields[4], at + " rssi_dbm");
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(e.what());
        }
        if (s.t_s < prev_t)
            throw std::runtime_error(at + ": time goes backward (t_s=" + fields[0] + ")");
        prev_t = s.t_s;
        if (!(s.rssi_dbm >= channel::kNoiseFloorDbm && s.rssi_dbm <= 30.0))
            throw std::runtime_error(at + ": rssi out of [-120, 30] dBm");
        log.samples.push_back(s);
    }
    if (!saw_header) throw std::runtime_error(where + ": missing header");
    if (log.samples.empty()) throw std::runtime_error(where + ": empty log");
    return log;
}

void write_csv(const MeasurementLog& log, const std::filesystem::path& path) {
    write_text_file(path, to_csv(log));
}

MeasurementLog read_csv(const std::filesystem::path& path) {
    return from_csv(read_text_file(path), path.string());
}

}  // namespace rftwin::measurement
