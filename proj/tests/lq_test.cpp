#include <gtest/gtest.h>

#include <cmath>

#include "mftg/ensemble.hpp"
#include "mftg/lq.hpp"
#include "mftg/scenario.hpp"

namespace {

mftg::LQCoefficients dv3_coeffs() {
    return mftg::lq_coefficients(mftg::builtin_scenario("dv_set3"));
}

TEST(Matching, ClosedFormWithoutRepulsion) {
    // With lambda_rep = 0 the system is linear:
    //   gamma(t) = (t - T) / (l_cont + l_des), eta(t) = l_noise (t - T).
    const mftg::LQCoefficients c = dv3_coeffs();
    ASSERT_EQ(c.lambda_rep, 0.0);
    const mftg::TimeGrid grid(c.horizon, 200);
    const mftg::LQMatchingSolution sol = mftg::integrate_matching(c, grid);
    const double w = c.lambda_cont + c.lambda_des;
    for (std::size_t k = 0; k < grid.points(); ++k) {
        const double t = grid.time(k);
        EXPECT_NEAR(sol.gamma[k], (t - c.horizon) / w, 1e-8);
        EXPECT_NEAR(sol.eta[k], c.lambda_noise * (t - c.horizon), 1e-8);
    }
    // Closed-form spot values at t = 0 for the set-3 weights.
    EXPECT_NEAR(sol.gamma[0], -1.6, 1e-9);
    EXPECT_NEAR(sol.eta[0], -0.4, 1e-9);
}

TEST(Matching, TerminalConditionsExact) {
    for (const char* name : {"kt_set2", "dv_set1", "dv_set3"}) {
        const mftg::LQCoefficients c =
            mftg::lq_coefficients(mftg::builtin_scenario(name));
        const mftg::TimeGrid grid(c.horizon, 50);
        const auto sol = mftg::integrate_matching(c, grid);
        EXPECT_EQ(sol.gamma.back(), 0.0) << name;
        EXPECT_EQ(sol.eta.back(), 0.0) << name;
        for (std::size_t j = 0; j < c.dim; ++j)
            EXPECT_EQ(sol.theta.back()[j], c.y_terminal[j]) << name;
    }
}

TEST(Matching, ThetaConstantWithoutForcing) {
    // No repulsion and no desired velocity: theta' = 0.
    const mftg::LQCoefficients c =
        mftg::lq_coefficients(mftg::builtin_scenario("kt_set2"));
    const mftg::TimeGrid grid(c.horizon, 64);
    const auto sol = mftg::integrate_matching(c, grid);
    for (std::size_t k = 0; k < grid.points(); ++k)
        for (std::size_t j = 0; j < c.dim; ++j)
            EXPECT_NEAR(sol.theta[k][j], c.y_terminal[j], 1e-12);
}

TEST(Matching, Rk4SelfConvergenceOrder) {
    // Nonlinear Riccati case (dv_set1 has lambda_rep = -2): halving the
    // step must shrink the error by at least 8x (expect ~16x for RK4).
    const mftg::LQCoefficients c =
        mftg::lq_coefficients(mftg::builtin_scenario("dv_set1"));
    auto gamma0 = [&](std::size_t steps) {
        return mftg::integrate_matching(c, mftg::TimeGrid(c.horizon, steps)).gamma[0];
    };
    const double ref = gamma0(4096);
    const double e1 = std::abs(gamma0(64) - ref);
    const double e2 = std::abs(gamma0(128) - ref);
    ASSERT_GT(e1, 0.0);
    EXPECT_GE(e1 / e2, 8.0);
}

TEST(Matching, RiccatiBlowupNamesTime) {
    // gamma' = -l_rep gamma^2 + 1/w with strongly positive l_rep drives
    // gamma to -infinity backward from 0 once 1/w is large.
    mftg::LQCoefficients c = dv3_coeffs();
    c.lambda_rep = 2000.0;
    c.lambda_des = 0.0;
    c.lambda_cont = 1e-4;
    c.horizon = 10.0;
    EXPECT_THROW(mftg::integrate_matching(c, mftg::TimeGrid(c.horizon, 2000)),
                 mftg::RiccatiBlowupError);
}

TEST(Control, StationaryPointExamples) {
    // u = (p + l_des v) / (l_cont + l_des).
    const mftg::LQCoefficients kt =
        mftg::lq_coefficients(mftg::builtin_scenario("kt_set2"));
    const auto kt_sol = mftg::integrate_matching(kt, mftg::TimeGrid(1.0, 10));
    const auto u1 = mftg::optimal_control_lq(kt_sol, {25.0, 0.0}, 0.3);
    EXPECT_DOUBLE_EQ(u1[0], 0.5);  // p / l_cont = 25 / 50
    EXPECT_DOUBLE_EQ(u1[1], 0.0);

    const mftg::LQCoefficients dv =
        mftg::lq_coefficients(mftg::builtin_scenario("dv_set4"));
    const auto dv_sol = mftg::integrate_matching(dv, mftg::TimeGrid(4.0, 10));
    // At p = 0 the control is l_des v / (l_cont + l_des) = (10/10.5) v.
    const auto v = mftg::eval_desired_velocity(dv.vdes, 2.0, 4.0, 2);
    const auto u2 = mftg::optimal_control_lq(dv_sol, {0.0, 0.0}, 2.0);
    EXPECT_DOUBLE_EQ(u2[0], 10.0 * v[0] / 10.5);
}

TEST(Oracle, DeterministicKeepTogetherStart) {
    // l_cont=50, l_init=10, y0=0.1, yT=2, T=1 => Y0* = 101/60.
    mftg::LQCoefficients c =
        mftg::lq_coefficients(mftg::builtin_scenario("kt_set2"));
    c.lambda_noise = 0.0;
    const auto o = mftg::keep_together_deterministic_oracle(c);
    EXPECT_NEAR(o.y_start[0], 101.0 / 60.0, 1e-12);
    EXPECT_NEAR(o.y_start[1], 101.0 / 60.0, 1e-12);
    EXPECT_NEAR(o.control[0], (2.0 - 101.0 / 60.0) / 1.0, 1e-12);
}

TEST(Solve, TerminalRowIsConstraintExactly) {
    const mftg::ScenarioSpec s = mftg::builtin_scenario("dv_set1");
    const mftg::TimeGrid grid(s.horizon, 20);
    const auto r = mftg::lq_solve(s, grid, 64, 5);
    for (std::size_t n = 0; n < 64; ++n)
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_EQ(r.ensemble.y.at(20, n, j), s.tagged.y_terminal.mean[j]);
}

TEST(Solve, ZIsEtaDiagonal) {
    const mftg::ScenarioSpec s = mftg::builtin_scenario("kt_set2");
    const mftg::TimeGrid grid(s.horizon, 10);
    const auto r = mftg::lq_solve(s, grid, 8, 5);
    for (std::size_t k = 0; k < grid.points(); ++k) {
        EXPECT_EQ(r.ensemble.z.at(k, 3, 0 * 2 + 0), r.matching.eta[k]);
        EXPECT_EQ(r.ensemble.z.at(k, 3, 0 * 2 + 1), 0.0);
    }
}

TEST(Solve, NoiseFreeMeanStartMatchesOracle) {
    mftg::ScenarioSpec s = mftg::builtin_scenario("kt_set2");
    s.tagged.lambda_noise = 0.0;
    s.tagged.y0_pref.stddev = 0.0;  // fully deterministic
    const mftg::TimeGrid grid(s.horizon, 100);
    const auto r = mftg::lq_solve(s, grid, 4, 7);
    const auto law = mftg::empirical_law(mftg::slice(r.ensemble.y, 0));
    EXPECT_NEAR(law.mean[0], 101.0 / 60.0, 2e-3);  // O(dt) Euler bias
}

TEST(Solve, RejectsCoupledScenario) {
    const mftg::ScenarioSpec s = mftg::builtin_scenario("kt_set1");
    EXPECT_THROW(mftg::lq_coefficients(s), std::invalid_argument);
}

} // namespace
