#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mftg/brownian.hpp"
#include "mftg/ensemble.hpp"
#include "mftg/game.hpp"
#include "mftg/grid.hpp"
#include "mftg/regression.hpp"
#include "mftg/rng.hpp"
#include "mftg/scenario.hpp"

namespace mftg {

struct SolveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// out receives the d-vector drift of path n over step k.
using DriftFn = std::function<void(std::size_t k, std::size_t n, double* out)>;

// Regressor columns for the conditional expectation at time index k.
using BasisInputsFn = std::function<Eigen::MatrixXd(std::size_t k)>;

// Euler-Maruyama forward scheme
//   X_{k+1} = X_k + b dt + sigma dB^x_k,   X_0 = x0 (exactly).
inline PathArray forward_euler(const TimeGrid& grid,
                               const BrownianBundle& bundle,
                               const std::vector<double>& x0,
                               const DriftFn& drift, double sigma) {
    const std::size_t n_paths = bundle.paths();
    const std::size_t d = x0.size() / n_paths;
    PathArray x(grid.points(), n_paths, d);
    for (std::size_t n = 0; n < n_paths; ++n)
        for (std::size_t j = 0; j < d; ++j) x.at(0, n, j) = x0[n * d + j];

    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        parallel_for(n_paths, [&](std::size_t n) {
            thread_local std::vector<double> b;
            b.assign(d, 0.0);
            drift(k, n, b.data());
            for (std::size_t j = 0; j < d; ++j) {
                double v = x.at(k, n, j) + b[j] * dt;
                if (sigma != 0.0 && j < bundle.dim_x())
                    v += sigma * bundle.increments_x().at(k, n, j);
                x.at(k + 1, n, j) = v;
            }
        });
        for (std::size_t n = 0; n < n_paths; ++n)
            for (std::size_t j = 0; j < d; ++j)
                if (!std::isfinite(x.at(k + 1, n, j)))
                    throw SolveError("forward_euler: non-finite state at step " +
                                     std::to_string(k + 1));
    }
    return x;
}

struct BackwardResult {
    PathArray y;  // (M+1) x N x d
    PathArray z;  // (M+1) x N x (d * (w_x + w_y)), empty unless requested
    double max_condition = 0.0;
};

// Regression-based backward scheme:
//   Y_k = E^[ Y_{k+1} - b^y dt | basis at t_k ],   Y_M = terminal (exactly),
//   Z_k = E^[ (Y_{k+1} - Y_k) dB_k^T | basis at t_k ] / dt.
// Subtracting the measurable Y_k does not change the expectation but
// removes the O(1/dt) variance of the raw Y_{k+1} dB^T targets.
inline BackwardResult backward_lsmc(const TimeGrid& grid,
                                    const BrownianBundle& bundle,
                                    const std::vector<double>& terminal,
                                    const DriftFn& driver,
                                    const BasisInputsFn& basis_inputs,
                                    const RegressionBasis& basis, double ridge,
                                    bool compute_z = false) {
    const std::size_t n_paths = bundle.paths();
    const std::size_t d = terminal.size() / n_paths;
    const std::size_t w = bundle.dim_total();
    const double dt = grid.dt();
    for (double v : terminal)
        if (!std::isfinite(v))
            throw SolveError("backward_lsmc: non-finite terminal sample");

    BackwardResult res;
    res.y = PathArray(grid.points(), n_paths, d);
    if (compute_z) res.z = PathArray(grid.points(), n_paths, d * w);
    for (std::size_t n = 0; n < n_paths; ++n)
        for (std::size_t j = 0; j < d; ++j)
            res.y.at(grid.steps(), n, j) = terminal[n * d + j];

    Eigen::MatrixXd targets(static_cast<Eigen::Index>(n_paths),
                            static_cast<Eigen::Index>(d));
    Eigen::MatrixXd z_targets;
    if (compute_z)
        z_targets.resize(static_cast<Eigen::Index>(n_paths),
                         static_cast<Eigen::Index>(d * w));
    for (std::size_t k = grid.steps(); k-- > 0;) {
        parallel_for(n_paths, [&](std::size_t n) {
            thread_local std::vector<double> b;
            b.assign(d, 0.0);
            driver(k, n, b.data());
            const auto row = static_cast<Eigen::Index>(n);
            for (std::size_t j = 0; j < d; ++j)
                targets(row, static_cast<Eigen::Index>(j)) =
                    res.y.at(k + 1, n, j) - b[j] * dt;
        });
        const Eigen::MatrixXd inputs = basis_inputs(k);
        const RegressionFit fit = regress_conditional(targets, inputs, basis, ridge);
        res.max_condition = std::max(res.max_condition, fit.condition);
        for (std::size_t n = 0; n < n_paths; ++n) {
            const auto row = static_cast<Eigen::Index>(n);
            for (std::size_t j = 0; j < d; ++j) {
                const double v = fit.fitted(row, static_cast<Eigen::Index>(j));
                if (!std::isfinite(v))
                    throw SolveError("backward_lsmc: non-finite value at step " +
                                     std::to_string(k));
                res.y.at(k, n, j) = v;
            }
        }
        if (compute_z) {
            parallel_for(n_paths, [&](std::size_t n) {
                const auto row = static_cast<Eigen::Index>(n);
                for (std::size_t i = 0; i < d; ++i) {
                    const double dy = res.y.at(k + 1, n, i) - res.y.at(k, n, i);
                    for (std::size_t c = 0; c < w; ++c) {
                        const double db =
                            c < bundle.dim_x()
                                ? bundle.increments_x().at(k, n, c)
                                : bundle.increments_y().at(k, n, c - bundle.dim_x());
                        z_targets(row, static_cast<Eigen::Index>(i * w + c)) =
                            dy * db / dt;
                    }
                }
            });
            const RegressionFit zfit =
                regress_conditional(z_targets, inputs, basis, ridge);
            for (std::size_t n = 0; n < n_paths; ++n)
                for (std::size_t i = 0; i < d * w; ++i)
                    res.z.at(k, n, i) = zfit.fitted(static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(i));
        }
    }
    return res;
}

// Paths of the Pontryagin costate processes. Control-problem runs fill
// pyy only (the corollary's single p); game runs fill all four blocks
// and the q integrand of the p^{xx} equation.
struct AdjointEnsemble {
    PathArray pxx, pxy, pyy, pyx;
    PathArray qxx;  // (M+1) x N x (d * w_x)
};

struct Diagnostics {
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> residuals;
    double max_condition = 0.0;
};

struct SolveResult {
    Ensemble ensemble;
    AdjointEnsemble adjoint;
    Diagnostics diagnostics;
};

namespace detail {

inline double damped_update(PathArray& current, const PathArray& proposal,
                            double alpha) {
    double num = 0.0, den = 0.0;
    auto& cur = current.data();
    const auto& next = proposal.data();
    for (std::size_t i = 0; i < cur.size(); ++i) {
        const double updated = (1.0 - alpha) * cur[i] + alpha * next[i];
        const double change = updated - cur[i];
        num += change * change;
        den += cur[i] * cur[i];
        cur[i] = updated;
    }
    const double count = static_cast<double>(cur.size());
    return std::sqrt(num / count) / (1.0 + std::sqrt(den / count));
}

} // namespace detail

// Picard iteration over the coupled BFSDE equilibrium system: forward
// Euler for X, backward LSMC for (Y, Z) and the terminal-condition
// adjoint, pathwise Euler for the initial-condition adjoints, and the
// closed-form control argmax. Mean-field terms are frozen per
// iteration; controls and adjoints are damped. Non-convergence is
// reported through the diagnostics, not thrown.
inline SolveResult solve_equilibrium(const ScenarioSpec& spec,
                                     const TimeGrid& grid, std::size_t n_paths,
                                     std::uint64_t seed,
                                     const PicardConfig& cfg) {
    validate_scenario(spec);
    const std::size_t d = spec.dim;
    const bool ordinary = spec.ordinary.present;
    const std::size_t wx = ordinary ? d : 0;
    const std::size_t wy = d;
    const std::size_t pts = grid.points();
    const double dt = grid.dt();
    const CoefficientSet coeffs = make_coefficients(spec);
    const BrownianBundle bundle(grid, n_paths, wx, wy, seed);

    // Constraint samples from dedicated streams.
    std::vector<double> y_term(n_paths * d), x_init, y0_pref;
    for (std::size_t n = 0; n < n_paths; ++n)
        for (std::size_t j = 0; j < d; ++j)
            y_term[n * d + j] =
                spec.tagged.y_terminal.mean[j] +
                spec.tagged.y_terminal.stddev *
                    rng::normal(seed, rng::kTerminalLaw, n, j);
    if (ordinary) {
        x_init.resize(n_paths * d);
        for (std::size_t n = 0; n < n_paths; ++n)
            for (std::size_t j = 0; j < d; ++j)
                x_init[n * d + j] =
                    spec.ordinary.x_initial.mean[j] +
                    spec.ordinary.x_initial.stddev *
                        rng::normal(seed, rng::kInitialLawOrdinary, n, j);
    }
    const bool random_y0p =
        spec.tagged.lambda_init > 0.0 && spec.tagged.y0_pref.stddev > 0.0;
    if (spec.tagged.lambda_init > 0.0) {
        y0_pref.resize(n_paths * d);
        for (std::size_t n = 0; n < n_paths; ++n) {
            const std::vector<double> v = sample_y0_pref(spec, seed, n);
            for (std::size_t j = 0; j < d; ++j) y0_pref[n * d + j] = v[j];
        }
    }

    SolveResult res;
    Ensemble& ens = res.ensemble;
    AdjointEnsemble& adj = res.adjoint;
    ens.y = PathArray(pts, n_paths, d);
    ens.uy = PathArray(pts, n_paths, d);
    adj.pyy = PathArray(pts, n_paths, d);
    if (ordinary) {
        ens.x = PathArray(pts, n_paths, d);
        ens.ux = PathArray(pts, n_paths, d);
        adj.pxx = PathArray(pts, n_paths, d);
        adj.pxy = PathArray(pts, n_paths, d);
        adj.pyx = PathArray(pts, n_paths, d);
    }

    const bool coupled_tagged =
        spec.tagged.lambda_attr != 0.0 || spec.tagged.lambda_rep != 0.0;
    const bool pyy_in_basis = coupled_tagged || spec.tagged.lambda_init > 0.0;
    const RegressionBasis basis{spec.solver.basis_degree};

    std::vector<std::vector<double>> mean_x(pts, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> mean_y(pts, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> vdes(pts);
    for (std::size_t k = 0; k < pts; ++k)
        vdes[k] = eval_desired_velocity(spec.tagged.vdes, grid.time(k),
                                        spec.horizon, d);

    auto tagged_driver = [&](std::size_t k, std::size_t n, double* out) {
        for (std::size_t j = 0; j < d; ++j) {
            out[j] = ens.uy.at(k, n, j);
            if (spec.tagged.lambda_noise != 0.0)
                out[j] += spec.tagged.lambda_noise * bundle.levels_y().at(k, n, j);
        }
    };
    auto tagged_basis_inputs = [&](std::size_t k) {
        std::size_t ncols = d;
        if (random_y0p) ncols += d;
        if (pyy_in_basis) ncols += d;
        Eigen::MatrixXd in(static_cast<Eigen::Index>(n_paths),
                           static_cast<Eigen::Index>(ncols));
        for (std::size_t n = 0; n < n_paths; ++n) {
            const auto row = static_cast<Eigen::Index>(n);
            Eigen::Index c = 0;
            for (std::size_t j = 0; j < d; ++j)
                in(row, c++) = bundle.levels_y().at(k, n, j);
            if (random_y0p)
                for (std::size_t j = 0; j < d; ++j)
                    in(row, c++) = y0_pref[n * d + j];
            if (pyy_in_basis)
                for (std::size_t j = 0; j < d; ++j)
                    in(row, c++) = adj.pyy.at(k, n, j);
        }
        return in;
    };
    auto ordinary_basis_inputs = [&](std::size_t k) {
        Eigen::MatrixXd in(static_cast<Eigen::Index>(n_paths),
                           static_cast<Eigen::Index>(2 * d));
        for (std::size_t n = 0; n < n_paths; ++n) {
            const auto row = static_cast<Eigen::Index>(n);
            for (std::size_t j = 0; j < d; ++j) {
                in(row, static_cast<Eigen::Index>(j)) = ens.x.at(k, n, j);
                in(row, static_cast<Eigen::Index>(d + j)) = ens.y.at(k, n, j);
            }
        }
        return in;
    };

    Diagnostics& diag = res.diagnostics;
    const double alpha = cfg.damping;
    const double alpha_x =
        cfg.damping_ordinary > 0.0 ? cfg.damping_ordinary : cfg.damping;

    auto run_pass = [&](bool final_pass) {
        // Forward crowd.
        if (ordinary) {
            ens.x = forward_euler(
                grid, bundle, x_init,
                [&](std::size_t k, std::size_t n, double* out) {
                    for (std::size_t j = 0; j < d; ++j)
                        out[j] = ens.ux.at(k, n, j);
                },
                spec.ordinary.sigma);
            for (std::size_t k = 0; k < pts; ++k)
                mean_x[k] = empirical_law(slice(ens.x, k)).mean;
        }

        // Tagged crowd.
        BackwardResult back =
            backward_lsmc(grid, bundle, y_term, tagged_driver,
                          tagged_basis_inputs, basis, cfg.ridge, final_pass);
        ens.y = std::move(back.y);
        if (final_pass) ens.z = std::move(back.z);
        diag.max_condition = std::max(diag.max_condition, back.max_condition);
        for (std::size_t k = 0; k < pts; ++k)
            mean_y[k] = empirical_law(slice(ens.y, k)).mean;

        // Initial-condition adjoints, pathwise Euler forward.
        PathArray pyy_new(pts, n_paths, d);
        PathArray pxy_new, pyx_new, pxx_new;
        if (ordinary) {
            pxy_new = PathArray(pts, n_paths, d);
            pyx_new = PathArray(pts, n_paths, d);
        }
        parallel_for(n_paths, [&](std::size_t n) {
            GamePoint pt;
            pt.y.resize(d);
            pt.mean_y.resize(d);
            if (ordinary) {
                pt.x.resize(d);
                pt.mean_x.resize(d);
            }
            if (spec.tagged.lambda_init > 0.0) {
                const auto p0 =
                    adjoint_initial_pyy(coeffs, ens.y.row(0, n), &y0_pref[n * d]);
                for (std::size_t j = 0; j < d; ++j) pyy_new.at(0, n, j) = p0[j];
            }
            for (std::size_t k = 0; k < grid.steps(); ++k) {
                pt.t = grid.time(k);
                for (std::size_t j = 0; j < d; ++j) {
                    pt.y[j] = ens.y.at(k, n, j);
                    pt.mean_y[j] = mean_y[k][j];
                    if (ordinary) {
                        pt.x[j] = ens.x.at(k, n, j);
                        pt.mean_x[j] = mean_x[k][j];
                    }
                }
                const AdjointStep st = assemble_adjoint_steps(coeffs, pt);
                for (std::size_t j = 0; j < d; ++j) {
                    pyy_new.at(k + 1, n, j) =
                        pyy_new.at(k, n, j) + st.drift_pyy[j] * dt;
                    if (ordinary)
                        pxy_new.at(k + 1, n, j) =
                            pxy_new.at(k, n, j) + st.drift_pxy[j] * dt;
                }
            }
        });

        // Terminal-condition adjoints.
        if (ordinary) {
            std::vector<double> pxx_term(n_paths * d);
            for (std::size_t n = 0; n < n_paths; ++n) {
                const auto pT = adjoint_terminal_pxx(coeffs, ens.x.row(grid.steps(), n));
                for (std::size_t j = 0; j < d; ++j) pxx_term[n * d + j] = pT[j];
            }
            auto pxx_driver = [&](std::size_t k, std::size_t n, double* out) {
                GamePoint pt;
                pt.t = grid.time(k);
                pt.x.assign(ens.x.row(k, n), ens.x.row(k, n) + d);
                pt.y.assign(ens.y.row(k, n), ens.y.row(k, n) + d);
                pt.mean_y = mean_y[k];
                pt.mean_x = mean_x[k];
                const AdjointStep st = assemble_adjoint_steps(coeffs, pt);
                for (std::size_t j = 0; j < d; ++j) out[j] = st.drift_pxx[j];
            };
            // Same scheme as the state BSDE; q^{xx} only on the last pass.
            BackwardResult pb = backward_lsmc(grid, bundle, pxx_term, pxx_driver,
                                              ordinary_basis_inputs, basis,
                                              cfg.ridge, final_pass);
            pxx_new = std::move(pb.y);
            diag.max_condition = std::max(diag.max_condition, pb.max_condition);
            if (final_pass) {
                adj.qxx = PathArray(pts, n_paths, d * wx);
                for (std::size_t k = 0; k < pts; ++k)
                    for (std::size_t n = 0; n < n_paths; ++n)
                        for (std::size_t i = 0; i < d; ++i)
                            for (std::size_t c = 0; c < wx; ++c)
                                adj.qxx.at(k, n, i * wx + c) =
                                    pb.z.at(k, n, i * bundle.dim_total() + c);
            }

            // p^{yx}: deterministic drift, zero terminal, zero integrand.
            GamePoint mp;
            mp.y.resize(d);
            mp.x.resize(d);
            std::vector<double> acc(d, 0.0);
            for (std::size_t k = grid.steps(); k-- > 0;) {
                mp.t = grid.time(k);
                mp.mean_y = mean_y[k];
                mp.mean_x = mean_x[k];
                mp.y = mean_y[k];
                mp.x = mean_x[k];
                const AdjointStep st = assemble_adjoint_steps(coeffs, mp);
                for (std::size_t j = 0; j < d; ++j) acc[j] += st.drift_pyx[j] * dt;
                for (std::size_t n = 0; n < n_paths; ++n)
                    for (std::size_t j = 0; j < d; ++j)
                        pyx_new.at(k, n, j) = -acc[j];
            }
        }

        // Control argmax from the fresh adjoints.
        PathArray uy_new(pts, n_paths, d);
        PathArray ux_new;
        if (ordinary) ux_new = PathArray(pts, n_paths, d);
        parallel_for(n_paths, [&](std::size_t n) {
            GamePoint pt;
            std::vector<double> p(d);
            for (std::size_t k = 0; k < pts; ++k) {
                pt.t = grid.time(k);
                for (std::size_t j = 0; j < d; ++j) p[j] = pyy_new.at(k, n, j);
                const auto uy = argmax_control(Player::Tagged, coeffs, pt, p);
                for (std::size_t j = 0; j < d; ++j) uy_new.at(k, n, j) = uy[j];
                if (ordinary) {
                    for (std::size_t j = 0; j < d; ++j) p[j] = pxx_new.at(k, n, j);
                    const auto ux = argmax_control(Player::Ordinary, coeffs, pt, p);
                    for (std::size_t j = 0; j < d; ++j) ux_new.at(k, n, j) = ux[j];
                }
            }
        });

        if (final_pass) {
            // Lock the adjoints to the final states; controls keep the
            // last damped iterate they were solved with.
            adj.pyy = std::move(pyy_new);
            if (ordinary) {
                adj.pxx = std::move(pxx_new);
                adj.pxy = std::move(pxy_new);
                adj.pyx = std::move(pyx_new);
            }
            return 0.0;
        }
        double residual = detail::damped_update(ens.uy, uy_new, alpha);
        residual = std::max(residual, detail::damped_update(adj.pyy, pyy_new, alpha));
        if (ordinary) {
            residual = std::max(residual, detail::damped_update(ens.ux, ux_new, alpha_x));
            residual = std::max(residual, detail::damped_update(adj.pxx, pxx_new, alpha_x));
            adj.pxy = std::move(pxy_new);
            adj.pyx = std::move(pyx_new);
        }
        return residual;
    };

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        const double residual = run_pass(false);
        diag.residuals.push_back(residual);
        diag.iterations = it + 1;
        if (residual < cfg.tol) {
            diag.converged = true;
            break;
        }
    }
    run_pass(true);
    return res;
}

inline SolveResult solve_equilibrium(const ScenarioSpec& spec) {
    const TimeGrid grid(spec.horizon, spec.solver.steps);
    return solve_equilibrium(spec, grid, spec.solver.paths, spec.solver.seed,
                             spec.solver.picard);
}

} // namespace mftg
