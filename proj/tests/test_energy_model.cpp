#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "memjscc/energy_model.hpp"
#include "memjscc/rng.hpp"

using namespace memjscc;

namespace {

EnergyModelParams fig2_params() {
    EnergyModelParams p;
    p.tau_final_s = 1.0;
    p.k_const = 2.0;
    p.r_start_ohm = 500e3;
    p.r_final_ohm = 100.0;
    return p;
}

// Independent oracle: composite 5-point Gauss-Legendre integration of
// i_max^2 * R(t) over [0, tau(r)].
double energy_by_integration(double r_target, const EnergyModelParams& p, int panels = 4000) {
    static const double nodes[5] = {-0.906179845938664, -0.538469310105683, 0.0,
                                    0.538469310105683, 0.906179845938664};
    static const double weights[5] = {0.236926885056189, 0.478628670499366, 0.568888888888889,
                                      0.478628670499366, 0.236926885056189};
    const double imax = compliance_current(p);
    const double tau = time_to_reach(r_target, p);
    if (tau == 0.0) return 0.0;
    const double h = tau / panels;
    double acc = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double mid = (i + 0.5) * h;
        for (int q = 0; q < 5; ++q)
            acc += weights[q] * resistance_at_time(mid + 0.5 * h * nodes[q], p);
    }
    return imax * imax * acc * 0.5 * h;
}

}  // namespace

TEST_CASE("resistance_at_time boundaries and interior point") {
    const auto p = fig2_params();
    CHECK(resistance_at_time(0.0, p) == Catch::Approx(500e3));
    CHECK(resistance_at_time(1.0, p) == Catch::Approx(100.0));
    // Conductance interpolation oracle at tau = 0.5.
    const double g = 1.0 / 500e3 + 0.5 * (1.0 / 100.0 - 1.0 / 500e3);
    CHECK(resistance_at_time(0.5, p) == Catch::Approx(1.0 / g).epsilon(1e-12));
    CHECK(resistance_at_time(0.5, p) == Catch::Approx(199.96).epsilon(1e-4));
    CHECK_THROWS_AS(resistance_at_time(-0.1, p), std::domain_error);
    CHECK_THROWS_AS(resistance_at_time(1.1, p), std::domain_error);
}

TEST_CASE("time_to_reach is the exact inverse") {
    const auto p = fig2_params();
    CHECK(time_to_reach(p.r_start_ohm, p) == Catch::Approx(0.0).margin(1e-15));
    CHECK(time_to_reach(p.r_final_ohm, p) == Catch::Approx(p.tau_final_s));
    CHECK(time_to_reach(199.96, p) == Catch::Approx(0.5).margin(1e-6));
    RngStream rng(7);
    for (int i = 0; i < 100; ++i) {
        const double tau = rng.uniform(0.0, 1.0);
        const double r = resistance_at_time(tau, p);
        CHECK(time_to_reach(r, p) == Catch::Approx(tau).margin(1e-9 * (1.0 + tau)));
    }
    CHECK_THROWS_AS(time_to_reach(1e9, p), std::domain_error);
}

TEST_CASE("compliance current") {
    auto p = fig2_params();
    CHECK(compliance_current(p) == Catch::Approx(0.019996).epsilon(1e-9));
    p.k_const = 4.0;
    CHECK(compliance_current(p) == Catch::Approx(2 * 0.019996).epsilon(1e-9));
    p = fig2_params();
    p.r_final_ohm = p.r_start_ohm * (1.0 + 1e-12);  // boundary: no change requested
    CHECK(compliance_current(p) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("energy_cost closed form vs integration oracle") {
    const auto p = fig2_params();
    CHECK(energy_cost(p.r_start_ohm, p) == 0.0);
    // Frozen from the integration oracle: A * ln(5000) and A * ln(100) with
    // A = 1 * 2^2 * (1/100 - 1/500e3).
    CHECK(energy_cost(100.0, p) == Catch::Approx(0.3406196).margin(1e-5));
    CHECK(energy_cost(5e3, p) == Catch::Approx(0.1841665).margin(1e-5));
    CHECK(energy_cost(100.0, p) == Catch::Approx(energy_by_integration(100.0, p)).epsilon(1e-6));
    CHECK(energy_cost(5e3, p) == Catch::Approx(energy_by_integration(5e3, p)).epsilon(1e-6));
    RngStream rng(11);
    for (int i = 0; i < 50; ++i) {
        const double r = std::exp(rng.uniform(std::log(100.0), std::log(500e3)));
        const double closed = energy_cost(r, p);
        const double integ = energy_by_integration(r, p);
        if (closed > 0.0) CHECK(std::abs(closed - integ) / closed <= 1e-6);
    }
    CHECK_THROWS_AS(energy_cost(0.0, p), std::domain_error);
}

TEST_CASE("energy_cost monotone away from r_start") {
    const auto p = fig2_params();
    double prev = energy_cost(1.0, p);
    for (double r = 10.0; r < p.r_start_ohm; r *= 2.0) {
        const double e = energy_cost(r, p);
        CHECK(e < prev);
        prev = e;
    }
    prev = 0.0;
    for (double r = p.r_start_ohm; r < 1e9; r *= 2.0) {
        const double e = energy_cost(r, p);
        CHECK(e >= prev);
        prev = e;
    }
}

TEST_CASE("mean_codeword_energy") {
    const auto p = fig2_params();
    CHECK(mean_codeword_energy({500e3, 500e3, 500e3}, p) == 0.0);
    CHECK(mean_codeword_energy({500e3, 100.0}, p) == Catch::Approx(0.17031).margin(1e-5));
    CHECK(mean_codeword_energy({100.0, 500e3}, p) ==
          Catch::Approx(mean_codeword_energy({500e3, 100.0}, p)));
    CHECK_THROWS_AS(mean_codeword_energy({}, p), std::domain_error);
}
