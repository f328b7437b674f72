#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "memjscc/ad.hpp"
#include "memjscc/energy_model.hpp"
#include "memjscc/jscc.hpp"
#include "memjscc/normalization.hpp"

namespace memjscc {

// Peak signal-to-noise ratio for [0,1]-scaled images; a perfect
// reconstruction reports +infinity.
inline double psnr(const Mat& x, const Mat& x_hat) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
        throw std::invalid_argument("psnr: shape mismatch");
    const double mse = (x - x_hat).squaredNorm() / static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

struct RegularizationConfig {
    double r_high_ohm = 750e3;
    double r_low_ohm = 100.0;
    double lambda_resistance = 1.0;
    double lambda_energy = 1.0;
    double e_b_joule = 0.01;

    void validate() const {
        if (!(r_low_ohm < r_high_ohm))
            throw std::invalid_argument("RegularizationConfig: need r_low < r_high");
        if (lambda_resistance < 0.0 || lambda_energy < 0.0)
            throw std::invalid_argument("RegularizationConfig: weights must be >= 0");
        if (!(e_b_joule > 0.0)) throw std::invalid_argument("RegularizationConfig: e_b must be > 0");
    }
};

// Soft resistance penalties, evaluated in normalized log-resistance space and
// averaged per codeword entry (and across the batch when m has several rows).
inline double r_upper(const Mat& m_bar, const RegularizationConfig& cfg,
                      const ResistanceNormalizer& rn) {
    cfg.validate();
    if (m_bar.size() == 0) throw std::invalid_argument("r_upper: empty codeword");
    const double hi = normalize_resistance(cfg.r_high_ohm, rn);
    double s = 0.0;
    for (Eigen::Index i = 0; i < m_bar.size(); ++i) {
        const double d = std::max(m_bar(i) - hi, 0.0);
        s += d * d;
    }
    return s / static_cast<double>(m_bar.size());
}

inline double r_lower(const Mat& m_bar, const RegularizationConfig& cfg,
                      const ResistanceNormalizer& rn) {
    cfg.validate();
    if (m_bar.size() == 0) throw std::invalid_argument("r_lower: empty codeword");
    const double lo = normalize_resistance(cfg.r_low_ohm, rn);
    double s = 0.0;
    for (Eigen::Index i = 0; i < m_bar.size(); ++i) {
        const double d = std::max(lo - m_bar(i), 0.0);
        s += d * d;
    }
    return s / static_cast<double>(m_bar.size());
}

inline ad::Var r_upper_ad(ad::Var m_bar, const RegularizationConfig& cfg,
                          const ResistanceNormalizer& rn) {
    const double hi = normalize_resistance(cfg.r_high_ohm, rn);
    return ad::mean_(ad::square_(ad::relu_(ad::add_scalar(m_bar, -hi))));
}

inline ad::Var r_lower_ad(ad::Var m_bar, const RegularizationConfig& cfg,
                          const ResistanceNormalizer& rn) {
    const double lo = normalize_resistance(cfg.r_low_ohm, rn);
    return ad::mean_(ad::square_(ad::relu_(ad::scale(ad::add_scalar(m_bar, -lo), -1.0))));
}

// Per-entry programming energy of a normalized codeword:
// E = A * |ln r_start - (m_bar * sigma_R + mu_R)|.
inline ad::Var codeword_energy_ad(ad::Var m_bar, const ResistanceNormalizer& rn,
                                  const EnergyModelParams& ep) {
    ep.validate();
    const double a = ep.energy_scale_a();
    ad::Var ln_r = ad::add_scalar(ad::scale(m_bar, rn.sigma_r), rn.mu_r);
    return ad::scale(ad::abs_(ad::add_scalar(ad::scale(ln_r, -1.0), std::log(ep.r_start_ohm))), a);
}

inline double mean_codeword_energy_norm(const Mat& m_bar, const ResistanceNormalizer& rn,
                                        const EnergyModelParams& ep) {
    ep.validate();
    if (m_bar.size() == 0) throw std::invalid_argument("mean_codeword_energy_norm: empty codeword");
    const double a = ep.energy_scale_a();
    double s = 0.0;
    for (Eigen::Index i = 0; i < m_bar.size(); ++i)
        s += a * std::abs(std::log(ep.r_start_ohm) - (m_bar(i) * rn.sigma_r + rn.mu_r));
    return s / static_cast<double>(m_bar.size());
}

// Default energy penalty: one-sided excess of the mean energy over the
// budget, max(E_mean/e_b - 1, 0)^2. The budget is an inequality constraint
// and must bind on average only; a symmetric per-entry form is available for
// comparison via `literal = true`, which implements mean((1 - E_i/e_b)^2).
inline ad::Var r_energy_ad(ad::Var m_bar, const ResistanceNormalizer& rn,
                           const EnergyModelParams& ep, const RegularizationConfig& cfg,
                           bool literal = false) {
    cfg.validate();
    ad::Var e = codeword_energy_ad(m_bar, rn, ep);
    if (literal)
        return ad::mean_(ad::square_(ad::add_scalar(ad::scale(e, -1.0 / cfg.e_b_joule), 1.0)));
    ad::Var rel = ad::add_scalar(ad::scale(ad::mean_(e), 1.0 / cfg.e_b_joule), -1.0);
    return ad::square_(ad::relu_(rel));
}

inline double r_energy(const Mat& m_bar, const ResistanceNormalizer& rn,
                       const EnergyModelParams& ep, const RegularizationConfig& cfg,
                       bool literal = false) {
    ad::Tape t;
    return r_energy_ad(ad::constant(t, m_bar), rn, ep, cfg, literal).val()(0, 0);
}

// Uniformly spaced delay grid with both endpoints included; the energy budget
// is enforced on this grid, one delay per batch slot.
inline std::vector<double> make_energy_delay_grid(int b, double d_min_s, double d_max_s) {
    if (b < 2) throw std::domain_error("make_energy_delay_grid: need b >= 2");
    if (d_min_s > d_max_s) throw std::domain_error("make_energy_delay_grid: d_min > d_max");
    std::vector<double> grid(static_cast<std::size_t>(b));
    const double a = (d_max_s - d_min_s) / static_cast<double>(b - 1);
    for (int i = 0; i < b; ++i) grid[static_cast<std::size_t>(i)] = d_min_s + a * i;
    grid.front() = d_min_s;
    grid.back() = d_max_s;
    return grid;
}

}  // namespace memjscc
