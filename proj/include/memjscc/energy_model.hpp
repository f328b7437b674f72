#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace memjscc {

// Pulse-programming cost model. A constant-current pulse of length tau moves
// the device conductance linearly from 1/r_start to 1/r_final; the energy to
// reach a target resistance reduces to A * |ln(r_start / r_target)|.
struct EnergyModelParams {
    double tau_final_s = 1.0;
    double k_const = 2.0;       // A * Ohm, compliance-current proportionality
    double r_start_ohm = 500e3; // R(0); equals the simulator's equilibrium resistance
    double r_final_ohm = 100.0; // R(tau_final)

    void validate() const {
        if (tau_final_s <= 0.0) throw std::invalid_argument("EnergyModelParams: tau_final must be > 0");
        if (k_const <= 0.0) throw std::invalid_argument("EnergyModelParams: K must be > 0");
        if (r_start_ohm <= 0.0 || r_final_ohm <= 0.0)
            throw std::invalid_argument("EnergyModelParams: resistances must be > 0");
        if (r_final_ohm == r_start_ohm)
            throw std::invalid_argument("EnergyModelParams: r_final must differ from r_start");
    }

    // J = (1/tau_final)(1/r_final - 1/r_start), conductance slew rate.
    double slew_j() const { return (1.0 / r_final_ohm - 1.0 / r_start_ohm) / tau_final_s; }

    // A = tau_final * K^2 * (1/r_final - 1/r_start), the energy scale.
    double energy_scale_a() const {
        return tau_final_s * k_const * k_const * (1.0 / r_final_ohm - 1.0 / r_start_ohm);
    }
};

// R(tau) along the programming pulse: conductance interpolates linearly
// between the endpoints.
inline double resistance_at_time(double tau_s, const EnergyModelParams& p) {
    p.validate();
    if (tau_s < 0.0 || tau_s > p.tau_final_s)
        throw std::domain_error("resistance_at_time: tau outside [0, tau_final]");
    const double g = 1.0 / p.r_start_ohm +
                     (tau_s / p.tau_final_s) * (1.0 / p.r_final_ohm - 1.0 / p.r_start_ohm);
    return 1.0 / std::abs(g);
}

// Exact inverse of resistance_at_time on the traversed interval.
inline double time_to_reach(double r_ohm, const EnergyModelParams& p) {
    p.validate();
    const double lo = std::min(p.r_start_ohm, p.r_final_ohm);
    const double hi = std::max(p.r_start_ohm, p.r_final_ohm);
    if (!(r_ohm >= lo && r_ohm <= hi))
        throw std::domain_error("time_to_reach: resistance outside the traversed interval");
    return (1.0 / r_ohm - 1.0 / p.r_start_ohm) / p.slew_j();
}

// Compliance current, zero when no resistance change is requested.
inline double compliance_current(const EnergyModelParams& p) {
    p.validate();
    return p.k_const * (1.0 / p.r_final_ohm - 1.0 / p.r_start_ohm);
}

// E(r) = |A * ln|r_start / r||. Depends only on the resistance ratio;
// E(r_start) = 0.
inline double energy_cost(double r_target_ohm, const EnergyModelParams& p) {
    p.validate();
    if (r_target_ohm <= 0.0) throw std::domain_error("energy_cost: target resistance must be > 0");
    return std::abs(p.energy_scale_a() * std::log(p.r_start_ohm / r_target_ohm));
}

inline double mean_codeword_energy(const std::vector<double>& codeword_ohm,
                                   const EnergyModelParams& p) {
    if (codeword_ohm.empty()) throw std::domain_error("mean_codeword_energy: empty codeword");
    double s = 0.0;
    for (double r : codeword_ohm) s += energy_cost(r, p);
    return s / static_cast<double>(codeword_ohm.size());
}

}  // namespace memjscc
