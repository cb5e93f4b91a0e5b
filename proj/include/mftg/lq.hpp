#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mftg/brownian.hpp"
#include "mftg/ensemble.hpp"
#include "mftg/grid.hpp"
#include "mftg/rng.hpp"
#include "mftg/scenario.hpp"

namespace mftg {

struct RiccatiBlowupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Coefficients of the decoupled linear-quadratic tagged problem.
struct LQCoefficients {
    double lambda_noise = 0.0;
    double lambda_cont = 1.0;
    double lambda_des = 0.0;
    double lambda_rep = 0.0;
    double lambda_init = 0.0;
    std::vector<double> q;            // avoidance point (zero if unused)
    std::vector<double> y_terminal;   // deterministic terminal constraint
    std::vector<double> y0_pref_mean; // preferred initial position mean
    double y0_pref_std = 0.0;
    DesiredVelocityLaw vdes;
    double horizon = 1.0;
    std::size_t dim = 2;
};

inline LQCoefficients lq_coefficients(const ScenarioSpec& s) {
    if (!s.is_lq_decoupled())
        throw std::invalid_argument(
            "lq_coefficients: scenario is not decoupled linear-quadratic");
    LQCoefficients c;
    c.lambda_noise = s.tagged.lambda_noise;
    c.lambda_cont = s.tagged.lambda_cont;
    c.lambda_des = s.tagged.lambda_des;
    c.lambda_rep = s.tagged.lambda_rep;
    c.lambda_init = s.tagged.lambda_init;
    c.q = s.tagged.q.empty() ? std::vector<double>(s.dim, 0.0) : s.tagged.q;
    c.y_terminal = s.tagged.y_terminal.mean;
    c.y0_pref_mean = s.tagged.y0_pref.mean.empty()
                         ? std::vector<double>(s.dim, 0.0)
                         : s.tagged.y0_pref.mean;
    c.y0_pref_std = s.tagged.y0_pref.stddev;
    c.vdes = s.tagged.vdes;
    c.horizon = s.horizon;
    c.dim = s.dim;
    return c;
}

// Tabulated solution of the matching ODE system on a TimeGrid.
// The ansatz Y = gamma * p + eta * B^y + theta reduces the optimally
// controlled dynamics to terminal-value ODEs; Z_t = eta(t).
struct LQMatchingSolution {
    std::vector<double> gamma;               // per grid point
    std::vector<double> eta;                 // per grid point
    std::vector<std::vector<double>> theta;  // per grid point, d-vector
    LQCoefficients coeffs;
    TimeGrid grid{1.0, 1};
};

// Classical RK4, integrated backward from the terminal data
//   gamma' = -l_rep gamma^2 + 1 / (l_cont + l_des),        gamma(T) = 0
//   eta'   = -l_rep gamma eta + l_noise,                   eta(T)   = 0
//   theta' = -l_rep gamma (theta - Q)
//            + l_des v_des(t) / (l_cont + l_des),          theta(T) = y_T
inline LQMatchingSolution integrate_matching(const LQCoefficients& c,
                                             const TimeGrid& grid) {
    if (!(c.lambda_cont + c.lambda_des > 0.0))
        throw std::invalid_argument("integrate_matching: lambda_cont + lambda_des must be positive");
    const std::size_t d = c.dim;
    const double inv_w = 1.0 / (c.lambda_cont + c.lambda_des);
    constexpr double kBlowup = 1e6;

    LQMatchingSolution sol;
    sol.coeffs = c;
    sol.grid = grid;
    const std::size_t pts = grid.points();
    sol.gamma.assign(pts, 0.0);
    sol.eta.assign(pts, 0.0);
    sol.theta.assign(pts, std::vector<double>(d, 0.0));
    sol.theta[grid.steps()] = c.y_terminal;

    auto vdes = [&](double t) {
        return eval_desired_velocity(c.vdes, t, c.horizon, d);
    };
    auto gamma_rhs = [&](double g) { return -c.lambda_rep * g * g + inv_w; };
    auto eta_rhs = [&](double g, double e) {
        return -c.lambda_rep * g * e + c.lambda_noise;
    };
    auto theta_rhs = [&](double t, double g, const std::vector<double>& th,
                         std::vector<double>& out) {
        const std::vector<double> v = vdes(t);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = -c.lambda_rep * g * (th[j] - c.q[j]) +
                     c.lambda_des * v[j] * inv_w;
    };

    const double h = -grid.dt();  // backward step
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
    for (std::size_t k = grid.steps(); k-- > 0;) {
        const double t = grid.time(k + 1);
        const double g = sol.gamma[k + 1];
        const double e = sol.eta[k + 1];
        const std::vector<double>& th = sol.theta[k + 1];

        const double g1 = gamma_rhs(g);
        const double e1 = eta_rhs(g, e);
        theta_rhs(t, g, th, k1);

        const double g_mid1 = g + 0.5 * h * g1;
        const double g2 = gamma_rhs(g_mid1);
        const double e2 = eta_rhs(g_mid1, e + 0.5 * h * e1);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = th[j] + 0.5 * h * k1[j];
        theta_rhs(t + 0.5 * h, g_mid1, tmp, k2);

        const double g_mid2 = g + 0.5 * h * g2;
        const double g3 = gamma_rhs(g_mid2);
        const double e3 = eta_rhs(g_mid2, e + 0.5 * h * e2);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = th[j] + 0.5 * h * k2[j];
        theta_rhs(t + 0.5 * h, g_mid2, tmp, k3);

        const double g_end = g + h * g3;
        const double g4 = gamma_rhs(g_end);
        const double e4 = eta_rhs(g_end, e + h * e3);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = th[j] + h * k3[j];
        theta_rhs(t + h, g_end, tmp, k4);

        sol.gamma[k] = g + h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
        sol.eta[k] = e + h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
        sol.theta[k].resize(d);
        for (std::size_t j = 0; j < d; ++j)
            sol.theta[k][j] = th[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);

        if (std::abs(sol.gamma[k]) > kBlowup)
            throw RiccatiBlowupError(
                "integrate_matching: Riccati factor blew up before t = " +
                std::to_string(grid.time(k)));
    }
    return sol;
}

// Stationary point of the quadratic control Hamiltonian:
//   u = (p + lambda_des * v_des(t)) / (lambda_cont + lambda_des).
inline std::vector<double> optimal_control_lq(const LQMatchingSolution& sol,
                                              const std::vector<double>& p,
                                              double t) {
    const auto& c = sol.coeffs;
    const double inv_w = 1.0 / (c.lambda_cont + c.lambda_des);
    const std::vector<double> v = eval_desired_velocity(c.vdes, t, c.horizon, c.dim);
    std::vector<double> u(c.dim);
    for (std::size_t j = 0; j < c.dim; ++j)
        u[j] = (p[j] + c.lambda_des * v[j]) * inv_w;
    return u;
}

// Zero-noise, no-attraction keep-together reduction: a single trade-off
// between starting near y0 and travel cost. Calculus of variations gives
// a constant-velocity path from
//   Y0* = (l_cont y_T / T + l_init y0) / (l_cont / T + l_init).
struct KeepTogetherOracle {
    std::vector<double> y_start;
    std::vector<double> control;  // constant velocity
    double cost = 0.0;
};

inline KeepTogetherOracle keep_together_deterministic_oracle(
    const LQCoefficients& c) {
    KeepTogetherOracle out;
    const double T = c.horizon;
    out.y_start.resize(c.dim);
    out.control.resize(c.dim);
    for (std::size_t j = 0; j < c.dim; ++j) {
        const double num = c.lambda_cont * c.y_terminal[j] / T +
                           c.lambda_init * c.y0_pref_mean[j];
        const double den = c.lambda_cont / T + c.lambda_init;
        out.y_start[j] = num / den;
        out.control[j] = (c.y_terminal[j] - out.y_start[j]) / T;
        out.cost += 0.5 * c.lambda_cont * out.control[j] * out.control[j] * T +
                    0.5 * c.lambda_init *
                        (out.y_start[j] - c.y0_pref_mean[j]) *
                        (out.y_start[j] - c.y0_pref_mean[j]);
    }
    return out;
}

// Simulates the tagged ensemble from the matching solution.
// Per path: p0 solves the initial-cost consistency condition
//   p0 = l_init (gamma(0) p0 + theta(0) - y0_pref),
// then p is stepped forward with dp = l_rep (Y - Q) dt and
// Y_k = gamma_k p_k + eta_k B^y_k + theta_k. The terminal row is the
// constraint itself, exactly.
struct LQSolveResult {
    Ensemble ensemble;
    PathArray adjoint;  // p paths, (M+1) x N x d
    LQMatchingSolution matching;
};

inline LQSolveResult lq_solve(const ScenarioSpec& spec, const TimeGrid& grid,
                              std::size_t paths, std::uint64_t seed) {
    const LQCoefficients c = lq_coefficients(spec);
    const std::size_t d = c.dim;
    const LQMatchingSolution sol = integrate_matching(c, grid);
    const BrownianBundle bundle(grid, paths, 0, d, seed);

    LQSolveResult res;
    res.matching = sol;
    const std::size_t pts = grid.points();
    res.ensemble.y = PathArray(pts, paths, d);
    res.ensemble.z = PathArray(pts, paths, d * d);
    res.ensemble.uy = PathArray(pts, paths, d);
    res.adjoint = PathArray(pts, paths, d);

    const double dt = grid.dt();
    const double p0_den = 1.0 - c.lambda_init * sol.gamma[0];
    parallel_for(paths, [&](std::size_t n) {
        std::vector<double> p(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double y0p = c.y0_pref_mean[j] +
                               c.y0_pref_std *
                                   rng::normal(seed, rng::kPreferredInitial, n, j);
            p[j] = c.lambda_init * (sol.theta[0][j] - y0p) / p0_den;
        }
        for (std::size_t k = 0; k < pts; ++k) {
            const double t = grid.time(k);
            for (std::size_t j = 0; j < d; ++j) {
                res.adjoint.at(k, n, j) = p[j];
                res.ensemble.y.at(k, n, j) =
                    k == grid.steps()
                        ? c.y_terminal[j]
                        : sol.gamma[k] * p[j] +
                              sol.eta[k] * bundle.levels_y().at(k, n, j) +
                              sol.theta[k][j];
                res.ensemble.z.at(k, n, j * d + j) = sol.eta[k];
            }
            const std::vector<double> u = optimal_control_lq(sol, p, t);
            for (std::size_t j = 0; j < d; ++j) res.ensemble.uy.at(k, n, j) = u[j];
            if (k < grid.steps())
                for (std::size_t j = 0; j < d; ++j)
                    p[j] += c.lambda_rep *
                            (res.ensemble.y.at(k, n, j) - c.q[j]) * dt;
        }
    });
    return res;
}

} // namespace mftg
