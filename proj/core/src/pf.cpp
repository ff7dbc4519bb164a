#include "rftwin/pf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rftwin/io_util.hpp"

namespace rftwin::pf {

namespace {

void normalize_weights(std::vector<Particle>& particles, double sum) {
    for (auto& p : particles) p.weight /= sum;
}

}  // namespace

void PfConfig::validate() const {
    if (n_particles < 100) throw std::invalid_argument("pf needs at least 100 particles");
    if (!(meas_sigma_db > 0.0)) throw std::invalid_argument("meas_sigma_db must be > 0");
    if (!(roughening_sigma_m >= 0.0))
        throw std::invalid_argument("roughening_sigma_m must be >= 0");
    if (!(ess_threshold > 0.0 && ess_threshold <= 1.0))
        throw std::invalid_argument("ess_threshold must be in (0, 1]");
    if (search_area.degenerate()) throw std::invalid_argument("search area is degenerate");
    if (!(tx_height_m > 0.0)) throw std::invalid_argument("tx_height_m must be > 0");
}

PfState init_uniform(const PfConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PfState state{{}, Rng(seed), 0, 0};
    state.particles.resize(static_cast<std::size_t>(cfg.n_particles));
    const double w = 1.0 / cfg.n_particles;
    for (auto& p : state.particles) {
        p.pos.east_m = state.rng.uniform(cfg.search_area.min_east_m, cfg.search_area.max_east_m);
        p.pos.north_m =
            state.rng.uniform(cfg.search_area.min_north_m, cfg.search_area.max_north_m);
        p.pos.up_m = cfg.tx_height_m;
        p.weight = w;
    }
    return state;
}

void predict(PfState& state, const PfConfig& cfg) {
    if (cfg.roughening_sigma_m == 0.0) return;
    for (auto& p : state.particles) {
        p.pos.east_m = std::clamp(p.pos.east_m + state.rng.normal(0.0, cfg.roughening_sigma_m),
                                  cfg.search_area.min_east_m, cfg.search_area.max_east_m);
        p.pos.north_m = std::clamp(p.pos.north_m + state.rng.normal(0.0, cfg.roughening_sigma_m),
                                   cfg.search_area.min_north_m, cfg.search_area.max_north_m);
    }
}

void update(PfState& state, const geo::EnuPosition& uav_pos, double z_dbm,
            const channel::ChannelParams& params, const PfConfig& cfg) {
    const double inv_two_sigma_sq = 1.0 / (2.0 * cfg.meas_sigma_db * cfg.meas_sigma_db);
    double sum = 0.0;
    for (auto& p : state.particles) {
        const double predicted = channel::mean_rssi_dbm(p.pos, uav_pos, params);
        const double dev = z_dbm - predicted;
        p.weight *= std::exp(-dev * dev * inv_two_sigma_sq);
        sum += p.weight;
    }
    if (!(sum >= 1e-300)) {
        // Outlier measurement wiped out every particle; restart flat.
        const double w = 1.0 / static_cast<double>(state.particles.size());
        for (auto& p : state.particles) p.weight = w;
        ++state.underflow_resets;
        return;
    }
    normalize_weights(state.particles, sum);
}

double effective_sample_size(const PfState& state) {
    double sq = 0.0;
    for (const auto& p : state.particles) sq += p.weight * p.weight;
    return 1.0 / sq;
}

void resample_systematic(PfState& state) {
    const std::size_t n = state.particles.size();
    const double u0 = state.rng.uniform01() / static_cast<double>(n);
    std::vector<Particle> next;
    next.reserve(n);
    double cumulative = state.particles[0].weight;
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = u0 + static_cast<double>(k) / static_cast<double>(n);
        while (u > cumulative && i + 1 < n) {
            ++i;
            cumulative += state.particles[i].weight;
        }
        next.push_back(state.particles[i]);
    }
    const double w = 1.0 / static_cast<double>(n);
    for (auto& p : next) p.weight = w;
    state.particles = std::move(next);
}

geo::EnuPosition estimate(const PfState& state) {
    geo::EnuPosition mean{0.0, 0.0, 0.0};
    for (const auto& p : state.particles) {
        mean.east_m += p.weight * p.pos.east_m;
        mean.north_m += p.weight * p.pos.north_m;
        mean.up_m += p.weight * p.pos.up_m;
    }
    return mean;
}

RunResult run(const measurement::MeasurementLog& log, const channel::ChannelParams& params,
              const PfConfig& cfg, std::uint64_t seed, std::optional<geo::EnuPosition> truth) {
    if (log.samples.empty()) throw std::invalid_argument("pf run needs a non-empty log");
    const geo::LocalFrame frame = log.frame();
    PfState state = init_uniform(cfg, seed);

    RunResult result;
    result.trace.reserve(log.samples.size());
    for (const auto& sample : log.samples) {
        const geo::EnuPosition uav = geo::to_enu(frame, sample.pos);
        predict(state, cfg);
        update(state, uav, sample.rssi_dbm, params, cfg);
        ++state.step_count;

        const double ess = effective_sample_size(state);
        const geo::EnuPosition est = estimate(state);
        StepDiag diag;
        diag.step = state.step_count;
        diag.ess = ess;
        diag.est_east_m = est.east_m;
        diag.est_north_m = est.north_m;
        if (truth) diag.error_m = geo::ground_distance(est, *truth);
        result.trace.push_back(diag);

        if (ess < cfg.ess_threshold * cfg.n_particles) {
            resample_systematic(state);
            ++result.resample_count;
        }
    }
    result.estimate = estimate(state);
    result.underflow_resets = state.underflow_resets;
    return result;
}

void write_trace_csv(const std::vector<StepDiag>& trace, const std::filesystem::path& path) {
    std::string out = "step,ess,est_east,est_north,error_m\n";
    for (const auto& d : trace) {
        out += std::to_string(d.step);
        out += ',';
        out += format_g10(d.ess);
        out += ',';
        out += format_g10(d.est_east_m);
        out += ',';
        out += format_g10(d.est_north_m);
        out += ',';
        out += format_g10(d.error_m);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace rftwin::pf
