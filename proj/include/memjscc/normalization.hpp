#pragma once

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "memjscc/drift_sim.hpp"

namespace memjscc {

// (ln r - mu_R) / sigma_R, with (mu_R, sigma_R) fit over a drift dataset.
struct ResistanceNormalizer {
    double mu_r = 0.0;
    double sigma_r = 1.0;

    void validate() const {
        if (!(sigma_r > 0.0)) throw std::invalid_argument("ResistanceNormalizer: sigma_R must be > 0");
    }
};

// mu_R: mean over series of the per-series mean of ln r. sigma_R: square root
// of the analogous mean of squared deviations.
inline ResistanceNormalizer fit_resistance_normalizer(const DriftDataset& ds) {
    if (ds.series.empty()) throw std::domain_error("fit_resistance_normalizer: empty dataset");
    double mu = 0.0;
    for (const auto& s : ds.series) {
        if (s.resistances_ohm.empty())
            throw std::domain_error("fit_resistance_normalizer: empty series");
        double m = 0.0;
        for (double r : s.resistances_ohm) m += std::log(r);
        mu += m / static_cast<double>(s.resistances_ohm.size());
    }
    mu /= static_cast<double>(ds.series.size());
    double var = 0.0;
    for (const auto& s : ds.series) {
        double v = 0.0;
        for (double r : s.resistances_ohm) {
            const double d = std::log(r) - mu;
            v += d * d;
        }
        var += v / static_cast<double>(s.resistances_ohm.size());
    }
    var /= static_cast<double>(ds.series.size());
    ResistanceNormalizer n{mu, std::sqrt(var)};
    n.validate();
    return n;
}

inline double normalize_resistance(double r_ohm, const ResistanceNormalizer& n) {
    n.validate();
    if (!(r_ohm > 0.0)) throw std::domain_error("normalize_resistance: r must be > 0");
    return (std::log(r_ohm) - n.mu_r) / n.sigma_r;
}

inline double denormalize_resistance(double r_bar, const ResistanceNormalizer& n) {
    n.validate();
    return std::exp(r_bar * n.sigma_r + n.mu_r);
}

// (ln(t + 0.1) - mu_T) / sigma_T; the offset keeps t = 0 finite. Degenerate
// delay distributions (t_min == t_max) use (mu_T, sigma_T) = (0, 1).
struct DelayNormalizer {
    double mu_t = 0.0;
    double sigma_t = 1.0;
    static constexpr double offset_s = 0.1;

    void validate() const {
        if (!(sigma_t > 0.0)) throw std::invalid_argument("DelayNormalizer: sigma_T must be > 0");
    }
};

// Statistics of ln(T + 0.1) for T uniform over the integers [t_min, t_max],
// computed by exact summation.
inline DelayNormalizer fit_delay_normalizer(double t_min_s, double t_max_s) {
    if (t_min_s < 0.0 || t_max_s < t_min_s)
        throw std::domain_error("fit_delay_normalizer: need 0 <= t_min <= t_max");
    if (t_min_s == t_max_s) return {0.0, 1.0};
    const auto lo = static_cast<std::int64_t>(std::llround(t_min_s));
    const auto hi = static_cast<std::int64_t>(std::llround(t_max_s));
    const double count = static_cast<double>(hi - lo + 1);
    double mu = 0.0;
    for (std::int64_t t = lo; t <= hi; ++t)
        mu += std::log(static_cast<double>(t) + DelayNormalizer::offset_s);
    mu /= count;
    double var = 0.0;
    for (std::int64_t t = lo; t <= hi; ++t) {
        const double d = std::log(static_cast<double>(t) + DelayNormalizer::offset_s) - mu;
        var += d * d;
    }
    var /= count;
    DelayNormalizer n{mu, std::sqrt(var)};
    n.validate();
    return n;
}

inline double normalize_delay(double t_s, const DelayNormalizer& n) {
    n.validate();
    if (t_s < 0.0) throw std::domain_error("normalize_delay: negative delay");
    return (std::log(t_s + DelayNormalizer::offset_s) - n.mu_t) / n.sigma_t;
}

inline double denormalize_delay(double t_bar, const DelayNormalizer& n) {
    n.validate();
    return std::exp(t_bar * n.sigma_t + n.mu_t) - DelayNormalizer::offset_s;
}

inline nlohmann::json normalizers_to_json(const ResistanceNormalizer& rn, const DelayNormalizer& dn) {
    return {{"mu_r", rn.mu_r}, {"sigma_r", rn.sigma_r}, {"mu_t", dn.mu_t}, {"sigma_t", dn.sigma_t}};
}

inline void normalizers_from_json(const nlohmann::json& j, ResistanceNormalizer& rn,
                                  DelayNormalizer& dn) {
    rn.mu_r = j.at("mu_r").get<double>();
    rn.sigma_r = j.at("sigma_r").get<double>();
    dn.mu_t = j.at("mu_t").get<double>();
    dn.sigma_t = j.at("sigma_t").get<double>();
    rn.validate();
    dn.validate();
}

}  // namespace memjscc
