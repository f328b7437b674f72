#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memjscc/rng.hpp"

namespace memjscc {

// Metastable-switch device: n_switches independent two-state switches, each an
// on/off continuous-time Markov chain. The on-fraction relaxes toward p_eq with
// time constant tau_relax, which reproduces resistive drift toward the
// equilibrium resistance.
struct DeviceModelParams {
    std::int64_t n_switches = 100000;
    double r_on_ohm = 100.0;
    double r_off_ohm = 1e6;
    double r_eq_ohm = 500e3;
    double tau_relax_s = 200.0;

    void validate() const {
        if (n_switches < 1) throw std::invalid_argument("DeviceModelParams: n_switches must be >= 1");
        if (!(0.0 < r_on_ohm && r_on_ohm < r_eq_ohm && r_eq_ohm < r_off_ohm))
            throw std::invalid_argument("DeviceModelParams: need 0 < r_on < r_eq < r_off");
        if (tau_relax_s <= 0.0) throw std::invalid_argument("DeviceModelParams: tau_relax must be > 0");
    }

    // Equilibrium on-fraction, in (0,1) by the ordering invariant.
    double p_eq() const {
        return (1.0 / r_eq_ohm - 1.0 / r_off_ohm) / (1.0 / r_on_ohm - 1.0 / r_off_ohm);
    }
    double rate_on() const { return p_eq() / tau_relax_s; }
    double rate_off() const { return (1.0 - p_eq()) / tau_relax_s; }
};

inline double device_conductance(double p_on, const DeviceModelParams& p) {
    p.validate();
    if (!(p_on >= 0.0 && p_on <= 1.0)) throw std::domain_error("device_conductance: p_on outside [0,1]");
    return 1.0 / p.r_off_ohm + p_on * (1.0 / p.r_on_ohm - 1.0 / p.r_off_ohm);
}

inline double resistance_from_on_fraction(double p_on, const DeviceModelParams& p) {
    return 1.0 / device_conductance(p_on, p);
}

inline double on_fraction_from_resistance(double r_ohm, const DeviceModelParams& p) {
    p.validate();
    if (!(r_ohm >= p.r_on_ohm && r_ohm <= p.r_off_ohm))
        throw std::domain_error("on_fraction_from_resistance: r outside [r_on, r_off]");
    return (1.0 / r_ohm - 1.0 / p.r_off_ohm) / (1.0 / p.r_on_ohm - 1.0 / p.r_off_ohm);
}

// Nearest representable on-count for a target resistance. Relative conductance
// error is bounded by 1/n_switches.
inline std::int64_t quantize_on_count(double r_ohm, const DeviceModelParams& p) {
    const double p0 = on_fraction_from_resistance(r_ohm, p);
    return static_cast<std::int64_t>(std::llround(p0 * static_cast<double>(p.n_switches)));
}

// One exact draw of the resistance after `delay`. Each on-switch stays on with
// probability p_eq + (1-p_eq) e^{-d/tau}; each off-switch turns on with
// probability p_eq (1 - e^{-d/tau}). Sampling the two binomial counts gives the
// exact two-state Markov transition for the whole device.
inline double sample_drift(double r0_ohm, double delay_s, const DeviceModelParams& p,
                           RngStream& rng) {
    if (delay_s < 0.0) throw std::domain_error("sample_drift: negative delay");
    const std::int64_t n_on = quantize_on_count(r0_ohm, p);
    const double decay = std::exp(-delay_s / p.tau_relax_s);
    const double peq = p.p_eq();
    const double p_stay = peq + (1.0 - peq) * decay;
    const double p_gain = peq * (1.0 - decay);
    const std::int64_t n_on_next =
        rng.binomial(n_on, p_stay) + rng.binomial(p.n_switches - n_on, p_gain);
    return resistance_from_on_fraction(
        static_cast<double>(n_on_next) / static_cast<double>(p.n_switches), p);
}

struct DriftSeries {
    double r0_ohm = 0.0;
    std::vector<double> sample_times_s; // uniformly spaced, starting at 0
    std::vector<double> resistances_ohm;
    std::uint64_t seed = 0;
};

// Chained sample_drift over successive 1/sample_rate intervals.
inline DriftSeries simulate_series(double r0_ohm, double duration_s, double sample_rate_hz,
                                   const DeviceModelParams& p, RngStream& rng,
                                   std::uint64_t seed = 0) {
    if (duration_s < 0.0) throw std::domain_error("simulate_series: negative duration");
    if (sample_rate_hz <= 0.0) throw std::domain_error("simulate_series: sample rate must be > 0");
    const double dt = 1.0 / sample_rate_hz;
    const auto n_points = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz)) + 1;
    DriftSeries s;
    s.r0_ohm = r0_ohm;
    s.seed = seed;
    s.sample_times_s.reserve(n_points);
    s.resistances_ohm.reserve(n_points);
    double r = resistance_from_on_fraction(
        static_cast<double>(quantize_on_count(r0_ohm, p)) / static_cast<double>(p.n_switches), p);
    s.sample_times_s.push_back(0.0);
    s.resistances_ohm.push_back(r);
    for (std::size_t j = 1; j < n_points; ++j) {
        r = sample_drift(r, dt, p, rng);
        s.sample_times_s.push_back(static_cast<double>(j) * dt);
        s.resistances_ohm.push_back(r);
    }
    return s;
}

struct DatasetConfig {
    std::int64_t count = 5000;
    double duration_s = 1000.0;
    double sample_rate_hz = 1.0;
    double r0_min_ohm = 100.0;
    double r0_max_ohm = 750e3;
    DeviceModelParams device;
    std::uint64_t master_seed = 1;

    void validate() const {
        device.validate();
        if (count < 1) throw std::invalid_argument("DatasetConfig: count must be >= 1");
        if (duration_s <= 0.0) throw std::invalid_argument("DatasetConfig: duration must be > 0");
        if (sample_rate_hz <= 0.0) throw std::invalid_argument("DatasetConfig: sample rate must be > 0");
        if (!(r0_min_ohm >= device.r_on_ohm && r0_max_ohm <= device.r_off_ohm &&
              r0_min_ohm <= r0_max_ohm))
            throw std::invalid_argument("DatasetConfig: r0 range outside [r_on, r_off]");
    }
};

struct DriftDataset {
    std::vector<DriftSeries> series;
    DatasetConfig manifest;
};

// Initial resistances uniformly spaced over the declared range in
// log-resistance (the state space the channel and normalizers operate in;
// linear spacing would leave the low-resistance decades almost unsampled).
// Each series owns the stream derived from (master_seed, index), so the
// result is schedule-independent and bitwise reproducible.
inline DriftDataset generate_dataset(const DatasetConfig& cfg) {
    cfg.validate();
    DriftDataset ds;
    ds.manifest = cfg;
    ds.series.reserve(static_cast<std::size_t>(cfg.count));
    const double ln_lo = std::log(cfg.r0_min_ohm);
    const double ln_hi = std::log(cfg.r0_max_ohm);
    for (std::int64_t i = 0; i < cfg.count; ++i) {
        const double frac = cfg.count == 1
                                ? 0.0
                                : static_cast<double>(i) / static_cast<double>(cfg.count - 1);
        const double r0 = std::exp(ln_lo + frac * (ln_hi - ln_lo));
        const std::uint64_t seed = derive_stream_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
        RngStream rng(seed);
        ds.series.push_back(
            simulate_series(r0, cfg.duration_s, cfg.sample_rate_hz, cfg.device, rng, seed));
    }
    return ds;
}

inline nlohmann::json device_params_to_json(const DeviceModelParams& p) {
    return {{"n_switches", p.n_switches}, {"r_on_ohm", p.r_on_ohm},   {"r_off_ohm", p.r_off_ohm},
            {"r_eq_ohm", p.r_eq_ohm},     {"tau_relax_s", p.tau_relax_s}};
}

inline DeviceModelParams device_params_from_json(const nlohmann::json& j) {
    DeviceModelParams p;
    p.n_switches = j.at("n_switches").get<std::int64_t>();
    p.r_on_ohm = j.at("r_on_ohm").get<double>();
    p.r_off_ohm = j.at("r_off_ohm").get<double>();
    p.r_eq_ohm = j.at("r_eq_ohm").get<double>();
    p.tau_relax_s = j.at("tau_relax_s").get<double>();
    return p;
}

// Dataset directory layout: manifest.json + series.bin (little-endian f64,
// row-major [count x points]) or one CSV per series with --format csv.
inline void save_dataset(const DriftDataset& ds, const std::filesystem::path& dir,
                         bool csv_format = false) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto& cfg = ds.manifest;
    nlohmann::json manifest = {
        {"format_version", 1},
        {"count", cfg.count},
        {"duration_s", cfg.duration_s},
        {"sample_rate_hz", cfg.sample_rate_hz},
        {"r0_min_ohm", cfg.r0_min_ohm},
        {"r0_max_ohm", cfg.r0_max_ohm},
        {"device", device_params_to_json(cfg.device)},
        {"master_seed", cfg.master_seed},
        {"format", csv_format ? "csv" : "bin"},
    };
    {
        std::ofstream mf(dir / "manifest.json");
        if (!mf) throw std::runtime_error("save_dataset: cannot write manifest in " + dir.string());
        mf << manifest.dump(2) << "\n";
    }
    if (csv_format) {
        for (std::size_t i = 0; i < ds.series.size(); ++i) {
            std::ofstream f(dir / ("series_" + std::to_string(i) + ".csv"));
            if (!f) throw std::runtime_error("save_dataset: cannot write series csv");
            f << "t_s,r_ohm\n";
            const auto& s = ds.series[i];
            f.precision(17);
            for (std::size_t j = 0; j < s.resistances_ohm.size(); ++j)
                f << s.sample_times_s[j] << "," << s.resistances_ohm[j] << "\n";
        }
    } else {
        std::ofstream f(dir / "series.bin", std::ios::binary);
        if (!f) throw std::runtime_error("save_dataset: cannot write series.bin");
        for (const auto& s : ds.series)
            f.write(reinterpret_cast<const char*>(s.resistances_ohm.data()),
                    static_cast<std::streamsize>(s.resistances_ohm.size() * sizeof(double)));
    }
}

inline DriftDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("load_dataset: missing manifest.json in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    DriftDataset ds;
    auto& cfg = ds.manifest;
    cfg.count = manifest.at("count").get<std::int64_t>();
    cfg.duration_s = manifest.at("duration_s").get<double>();
    cfg.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
    cfg.r0_min_ohm = manifest.at("r0_min_ohm").get<double>();
    cfg.r0_max_ohm = manifest.at("r0_max_ohm").get<double>();
    cfg.device = device_params_from_json(manifest.at("device"));
    cfg.master_seed = manifest.at("master_seed").get<std::uint64_t>();
    const auto n_points =
        static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz)) + 1;
    const double dt = 1.0 / cfg.sample_rate_hz;
    const bool csv = manifest.value("format", "bin") == std::string("csv");
    ds.series.resize(static_cast<std::size_t>(cfg.count));
    std::ifstream bin;
    if (!csv) {
        bin.open(dir / "series.bin", std::ios::binary);
        if (!bin) throw std::runtime_error("load_dataset: missing series.bin");
    }
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        auto& s = ds.series[i];
        s.sample_times_s.resize(n_points);
        s.resistances_ohm.resize(n_points);
        for (std::size_t j = 0; j < n_points; ++j) s.sample_times_s[j] = static_cast<double>(j) * dt;
        if (csv) {
            std::ifstream f(dir / ("series_" + std::to_string(i) + ".csv"));
            if (!f) throw std::runtime_error("load_dataset: missing series csv");
            std::string line;
            std::getline(f, line); // header
            for (std::size_t j = 0; j < n_points; ++j) {
                std::getline(f, line);
                const auto comma = line.find(',');
                s.resistances_ohm[j] = std::stod(line.substr(comma + 1));
            }
        } else {
            bin.read(reinterpret_cast<char*>(s.resistances_ohm.data()),
                     static_cast<std::streamsize>(n_points * sizeof(double)));
            if (!bin) throw std::runtime_error("load_dataset: series.bin truncated");
        }
        s.r0_ohm = s.resistances_ohm[0];
    }
    return ds;
}

}  // namespace memjscc
