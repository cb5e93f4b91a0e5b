#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mftg/game.hpp"
#include "mftg/lq.hpp"
#include "mftg/rng.hpp"
#include "mftg/scenario.hpp"

namespace {

// One-dimensional desired-velocity scenario used for hand-computed
// Hamiltonian values.
mftg::ScenarioSpec test_scenario_1d() {
    mftg::ScenarioSpec s;
    s.kind = mftg::ScenarioKind::DesiredVelocity;
    s.dim = 1;
    s.horizon = 1.0;
    s.tagged.lambda_noise = 0.0;
    s.tagged.lambda_cont = 0.5;
    s.tagged.lambda_des = 1.0;
    s.tagged.lambda_rep = -2.0;
    s.tagged.q = {5.0};
    s.tagged.y_terminal.mean = {0.0};
    s.tagged.vdes.kind = mftg::VelocityLawKind::PiecewiseSign;
    s.tagged.vdes.magnitude = {3.0};
    mftg::validate_scenario(s);
    return s;
}

TEST(Hamiltonian, ZeroEverywhereIsZero) {
    mftg::ScenarioSpec s;
    s.kind = mftg::ScenarioKind::KeepTogether;
    s.dim = 2;
    s.horizon = 1.0;
    s.tagged.lambda_cont = 1.0;
    s.tagged.y_terminal.mean = {0.0, 0.0};
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.y = {0.0, 0.0};
    pt.mean_y = {0.0, 0.0};
    pt.uy = {0.0, 0.0};
    const auto h = mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {},
                                          {0.0, 0.0}, {});
    EXPECT_EQ(h.value, 0.0);
}

TEST(Hamiltonian, HandComputedSubstitution) {
    // b = u = 2, p = 1, v_des = 3, Y = Q:
    // H = 2*1 - 1/2 (0.5*4 + 1*(2-3)^2 - 2*0) = 0.5.
    const mftg::ScenarioSpec s = test_scenario_1d();
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.t = 0.75;  // second half: v_des = +3
    pt.y = {5.0};
    pt.mean_y = {5.0};
    pt.uy = {2.0};
    const auto h =
        mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {}, {1.0}, {});
    EXPECT_DOUBLE_EQ(h.value, 0.5);
}

TEST(Hamiltonian, LinearInAdjoint) {
    const mftg::ScenarioSpec s = test_scenario_1d();
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.t = 0.75;
    pt.y = {5.0};
    pt.mean_y = {5.0};
    pt.uy = {2.0};
    const double h1 =
        mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {}, {1.0}, {}).value;
    const double h3 =
        mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {}, {3.0}, {}).value;
    // Slope in p equals the drift b = u = 2.
    EXPECT_DOUBLE_EQ((h3 - h1) / 2.0, 2.0);
}

TEST(Argmax, ScalarStationarityAndSymmetry) {
    // H = u p - lambda u^2 / 2 with p = 2, lambda = 4 -> u = 0.5.
    mftg::ScenarioSpec s = test_scenario_1d();
    s.tagged.lambda_cont = 4.0;
    s.tagged.lambda_des = 0.0;
    s.tagged.vdes.kind = mftg::VelocityLawKind::None;
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.t = 0.2;
    EXPECT_DOUBLE_EQ(mftg::argmax_control(mftg::Player::Tagged, c, pt, {2.0})[0],
                     0.5);
    EXPECT_DOUBLE_EQ(mftg::argmax_control(mftg::Player::Tagged, c, pt, {0.0})[0],
                     0.0);
}

TEST(Argmax, MatchesLqControlBitForBit) {
    const mftg::ScenarioSpec s = mftg::builtin_scenario("dv_set4");
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    const auto sol = mftg::integrate_matching(mftg::lq_coefficients(s),
                                              mftg::TimeGrid(s.horizon, 16));
    for (double t : {0.0, 1.3, 2.0, 3.7}) {
        const std::vector<double> p = {0.3 * t - 1.0, 0.9};
        mftg::GamePoint pt;
        pt.t = t;
        const auto a = mftg::argmax_control(mftg::Player::Tagged, c, pt, p);
        const auto b = mftg::optimal_control_lq(sol, p, t);
        EXPECT_EQ(a[0], b[0]);
        EXPECT_EQ(a[1], b[1]);
    }
}

TEST(Argmax, NonConcaveRejected) {
    mftg::ScenarioSpec s = mftg::builtin_scenario("bidir");
    const mftg::CoefficientSet good = mftg::make_coefficients(s);
    mftg::CoefficientSet bad = good;
    bad.ordinary.lambda_cont = 0.0;
    mftg::GamePoint pt;
    EXPECT_NO_THROW(mftg::argmax_control(mftg::Player::Ordinary, good, pt, {1.0, 1.0}));
    EXPECT_THROW(mftg::argmax_control(mftg::Player::Ordinary, bad, pt, {1.0, 1.0}),
                 mftg::UnsupportedScenarioError);
}

TEST(Argmax, MaximizesOverRandomPerturbations) {
    const mftg::ScenarioSpec s = test_scenario_1d();
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.t = 0.75;
    pt.y = {1.0};
    pt.mean_y = {0.5};
    const std::vector<double> p = {0.7};
    const auto u_hat = mftg::argmax_control(mftg::Player::Tagged, c, pt, p);
    pt.uy = u_hat;
    const double h_hat =
        mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {}, p, {}).value;
    for (std::size_t i = 0; i < 50; ++i) {
        const double r = 4.0 * mftg::rng::normal(3, 9, i, 0);
        pt.uy = {u_hat[0] + r};
        const double h =
            mftg::eval_hamiltonian(mftg::Player::Tagged, c, pt, {}, p, {}).value;
        EXPECT_GE(h_hat, h);
    }
}

TEST(MeanDerivative, DistToMeanIsExactlyZero) {
    mftg::PathArray a(1, 100, 2);
    for (std::size_t n = 0; n < 100; ++n) {
        a.at(0, n, 0) = std::sin(static_cast<double>(n));
        a.at(0, n, 1) = static_cast<double>(n);
    }
    const auto v = mftg::mean_derivative_quadratic(
        mftg::MeanQuadraticForm::DistToMean, mftg::slice(a, 0));
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 0.0);
}

TEST(MeanDerivative, MeanToPointForms) {
    mftg::PathArray a(1, 4, 2);
    for (std::size_t n = 0; n < 4; ++n) {
        a.at(0, n, 0) = 1.0;
        a.at(0, n, 1) = 1.0;
    }
    // Point mass at c -> 0; c = origin -> 2 * mean.
    const auto zero = mftg::mean_derivative_quadratic(
        mftg::MeanQuadraticForm::MeanToPoint, mftg::slice(a, 0), {1.0, 1.0});
    EXPECT_EQ(zero[0], 0.0);
    const auto v = mftg::mean_derivative_quadratic(
        mftg::MeanQuadraticForm::MeanToPoint, mftg::slice(a, 0), {0.0, 0.0});
    EXPECT_DOUBLE_EQ(v[0], 2.0);
    EXPECT_DOUBLE_EQ(v[1], 2.0);
}

TEST(AdjointSteps, HandComputedRepulsionDrift) {
    // d p^{yy} / dt = -d_y H = lambda_rep (Y - Q); at Y - Q = (1, 0) and
    // lambda_rep = -2 the drift is -2 * (1, 0).
    mftg::ScenarioSpec s = test_scenario_1d();
    s.dim = 2;
    s.tagged.q = {5.0, 5.0};
    s.tagged.y_terminal.mean = {0.0, 0.0};
    s.tagged.vdes.magnitude = {3.0, 3.0};
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.y = {6.0, 5.0};
    pt.mean_y = {6.0, 5.0};
    const auto st = mftg::assemble_adjoint_steps(c, pt);
    EXPECT_DOUBLE_EQ(st.drift_pyy[0], -2.0);
    EXPECT_DOUBLE_EQ(st.drift_pyy[1], 0.0);
}

TEST(AdjointSteps, ZeroCouplingGivesZeroAdjoints) {
    mftg::ScenarioSpec s = mftg::builtin_scenario("dv_set3");
    ASSERT_EQ(s.tagged.lambda_rep, 0.0);
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    mftg::GamePoint pt;
    pt.y = {1.0, 2.0};
    pt.mean_y = {0.0, 0.0};
    const auto st = mftg::assemble_adjoint_steps(c, pt);
    EXPECT_EQ(st.drift_pyy[0], 0.0);
    EXPECT_EQ(st.drift_pyy[1], 0.0);
}

TEST(AdjointSteps, DriftsMatchFiniteDifferencesOfHamiltonian) {
    // drift_pyy = -(d_y H + E[* d_mu H]); for the bidirectional running
    // cost the mean enters through the other crowd only, so the drift
    // must match -d_y H by central differences.
    const mftg::ScenarioSpec s = mftg::builtin_scenario("bidir");
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    const double h = 1e-6;
    for (std::size_t trial = 0; trial < 100; ++trial) {
        mftg::GamePoint pt;
        pt.t = 0.3;
        auto rnd = [&](std::uint64_t comp) {
            return 3.0 * mftg::rng::normal(17, 1, trial, comp);
        };
        pt.y = {rnd(0), rnd(1)};
        pt.mean_y = {rnd(2), rnd(3)};
        pt.uy = {rnd(4), rnd(5)};
        pt.x = {rnd(6), rnd(7)};
        pt.mean_x = {rnd(8), rnd(9)};
        pt.ux = {rnd(10), rnd(11)};
        const auto st = mftg::assemble_adjoint_steps(c, pt);
        const std::vector<double> py = {1.0, -0.5}, px = {0.3, 0.2};
        for (std::size_t j = 0; j < 2; ++j) {
            mftg::GamePoint lo = pt, hi = pt;
            lo.y[j] -= h;
            hi.y[j] += h;
            const double dH =
                (mftg::eval_hamiltonian(mftg::Player::Tagged, c, hi, {}, py, {}).value -
                 mftg::eval_hamiltonian(mftg::Player::Tagged, c, lo, {}, py, {}).value) /
                (2.0 * h);
            EXPECT_NEAR(st.drift_pyy[j], -dH, 1e-5 * (1.0 + std::abs(dH)));

            lo = pt;
            hi = pt;
            lo.x[j] -= h;
            hi.x[j] += h;
            const double dHx =
                (mftg::eval_hamiltonian(mftg::Player::Ordinary, c, hi, px, py, {}).value -
                 mftg::eval_hamiltonian(mftg::Player::Ordinary, c, lo, px, py, {}).value) /
                (2.0 * h);
            EXPECT_NEAR(st.drift_pxx[j], -dHx, 1e-5 * (1.0 + std::abs(dHx)));
        }
    }
}

TEST(AdjointSteps, BoundaryRows) {
    const mftg::ScenarioSpec s = mftg::builtin_scenario("bidir");
    const mftg::CoefficientSet c = mftg::make_coefficients(s);
    const double xT[2] = {0.5, 0.0};
    const auto pxxT = mftg::adjoint_terminal_pxx(c, xT);
    // -lambda_term (x_T - target) = -10 * 0.5.
    EXPECT_DOUBLE_EQ(pxxT[0], -5.0);
    EXPECT_DOUBLE_EQ(pxxT[1], 0.0);

    const double y0[2] = {1.0, 1.0}, pref[2] = {0.0, 1.0};
    const auto pyy0 = mftg::adjoint_initial_pyy(c, y0, pref);
    // lambda_init (y_0 - pref) = 3 * (1, 0).
    EXPECT_DOUBLE_EQ(pyy0[0], 3.0);
    EXPECT_DOUBLE_EQ(pyy0[1], 0.0);
}

// Noise-free keep-together optimum as an exactly known equilibrium
// candidate for the spike machinery.
struct DeterministicCandidate {
    mftg::ScenarioSpec spec;
    mftg::Ensemble ens;
    mftg::TimeGrid grid{1.0, 1};
};

DeterministicCandidate make_candidate(std::size_t steps, std::size_t paths) {
    DeterministicCandidate c;
    c.spec = mftg::builtin_scenario("kt_set2");
    c.spec.tagged.lambda_noise = 0.0;
    c.spec.tagged.y0_pref.stddev = 0.0;
    c.spec.solver.paths = paths;
    c.grid = mftg::TimeGrid(c.spec.horizon, steps);
    const auto oracle = mftg::keep_together_deterministic_oracle(
        mftg::lq_coefficients(c.spec));
    c.ens.y = mftg::PathArray(steps + 1, paths, 2);
    c.ens.uy = mftg::PathArray(steps + 1, paths, 2);
    for (std::size_t k = 0; k <= steps; ++k)
        for (std::size_t n = 0; n < paths; ++n)
            for (std::size_t j = 0; j < 2; ++j) {
                c.ens.y.at(k, n, j) =
                    oracle.y_start[j] + oracle.control[j] * c.grid.time(k);
                c.ens.uy.at(k, n, j) = oracle.control[j];
            }
    return c;
}

TEST(Spike, QuadraticExpansionAtDeterministicOptimum) {
    const DeterministicCandidate c = make_candidate(100, 64);
    const double eps = 0.1, delta = 0.3;
    const auto report =
        mftg::spike_variation_check(c.spec, c.grid, c.ens, 20, eps, delta, 42);
    EXPECT_TRUE(report.pass);
    const double lc = c.spec.tagged.lambda_cont;
    for (const auto& t : report.trials) {
        ASSERT_NEAR(t.std_error, 0.0, 1e-8);  // deterministic candidate
        // First-order terms vanish; the quadratic term dominates. The
        // initial-cost curvature adds 1/2 l_init delta^2 eps^2.
        const double li = c.spec.tagged.lambda_init;
        const double expected =
            0.5 * lc * delta * delta * eps + 0.5 * li * delta * delta * eps * eps;
        EXPECT_NEAR(t.mean_delta, expected, 0.15 * expected);
    }
}

TEST(Spike, ZeroIntervalGivesZeroDelta) {
    const DeterministicCandidate c = make_candidate(50, 8);
    const auto report =
        mftg::spike_variation_check(c.spec, c.grid, c.ens, 5, 0.0, 0.3, 1);
    for (const auto& t : report.trials) EXPECT_EQ(t.mean_delta, 0.0);
    EXPECT_TRUE(report.pass);
}

TEST(Spike, DetunedControlFails) {
    DeterministicCandidate c = make_candidate(100, 64);
    // Shift the control away from the optimum; the backward state moves
    // with it (Y_T stays pinned), keeping the profile dynamically
    // consistent but suboptimal.
    const double bias = 1.0;
    for (std::size_t k = 0; k <= 100; ++k)
        for (std::size_t n = 0; n < 64; ++n) {
            c.ens.uy.at(k, n, 0) += bias;
            c.ens.y.at(k, n, 0) -= bias * (c.grid.horizon() - c.grid.time(k));
        }
    const auto report =
        mftg::spike_variation_check(c.spec, c.grid, c.ens, 40, 0.1, 0.5, 7);
    EXPECT_FALSE(report.pass);
}

} // namespace
