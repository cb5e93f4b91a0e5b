#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mftg/ensemble.hpp"
#include "mftg/grid.hpp"
#include "mftg/reduce.hpp"
#include "mftg/rng.hpp"
#include "mftg/scenario.hpp"

namespace mftg {

struct UnsupportedScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Player { Ordinary, Tagged };

// One evaluation point of the coupled system. Laws enter through their
// means only; unused blocks may stay empty.
struct GamePoint {
    double t = 0.0;
    std::vector<double> y, mean_y, uy;  // tagged state, law mean, control
    std::vector<double> z;              // d x (w_x + w_y), row major
    std::vector<double> x, mean_x, ux;  // ordinary state, law mean, control
    std::vector<double> by_level;       // B^y level, feeds the noise drift
};

// Drift, diffusion, and cost evaluators plus the raw quadratic weights
// they were built from. All evaluators are deterministic functions of
// the point.
struct CoefficientSet {
    std::size_t dim = 2;
    double horizon = 1.0;
    bool has_ordinary = false;
    double sigma_x = 0.0;  // constant scalar diffusion on the B^x block

    std::function<std::vector<double>(const GamePoint&)> drift_x, drift_y;
    std::function<double(const GamePoint&)> run_cost_x, run_cost_y;
    // h^x(theta^y_T, theta^x_T) and h^y(theta^y_0, theta^x_0); the
    // preference center for h^y is per path, hence an argument.
    std::function<double(const GamePoint&)> boundary_x;
    std::function<double(const GamePoint&, const std::vector<double>& y0_pref)> boundary_y;

    bool quadratic_controls = true;
    TaggedBlock tagged;      // raw weights for analytic gradients
    OrdinaryBlock ordinary;
};

// Builds the evaluators for a validated scenario.
inline CoefficientSet make_coefficients(const ScenarioSpec& s) {
    CoefficientSet c;
    c.dim = s.dim;
    c.horizon = s.horizon;
    c.has_ordinary = s.ordinary.present;
    c.sigma_x = s.ordinary.present ? s.ordinary.sigma : 0.0;
    c.tagged = s.tagged;
    c.ordinary = s.ordinary;
    const std::size_t d = s.dim;
    const ScenarioKind kind = s.kind;

    c.drift_y = [d, lnoise = s.tagged.lambda_noise](const GamePoint& pt) {
        // b^y = u^y + lambda_noise * B^y (level noise).
        std::vector<double> b = pt.uy;
        if (lnoise != 0.0 && !pt.by_level.empty())
            for (std::size_t j = 0; j < d; ++j) b[j] += lnoise * pt.by_level[j];
        return b;
    };
    c.drift_x = [d, present = s.ordinary.present](const GamePoint& pt) {
        return present ? pt.ux : std::vector<double>(d, 0.0);
    };
    c.run_cost_y = [d, t = s.tagged, kind, T = s.horizon](const GamePoint& pt) {
        double f = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            f += t.lambda_cont * pt.uy[j] * pt.uy[j];
        if (t.lambda_attr != 0.0)
            for (std::size_t j = 0; j < d; ++j) {
                const double dj = pt.y[j] - pt.mean_y[j];
                f += t.lambda_attr * dj * dj;
            }
        if (t.lambda_des != 0.0) {
            const std::vector<double> v = eval_desired_velocity(t.vdes, pt.t, T, d);
            for (std::size_t j = 0; j < d; ++j) {
                const double dj = pt.uy[j] - v[j];
                f += t.lambda_des * dj * dj;
            }
        }
        if (t.lambda_rep != 0.0) {
            for (std::size_t j = 0; j < d; ++j) {
                const double ref = kind == ScenarioKind::Bidirectional
                                       ? pt.mean_x[j]
                                       : t.q[j];
                const double dj = pt.y[j] - ref;
                f += t.lambda_rep * dj * dj;
            }
        }
        return 0.5 * f;
    };
    c.run_cost_x = [d, o = s.ordinary](const GamePoint& pt) {
        if (!o.present) return 0.0;
        double f = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            f += o.lambda_cont * pt.ux[j] * pt.ux[j];
        if (o.lambda_rep != 0.0)
            for (std::size_t j = 0; j < d; ++j) {
                const double dj = pt.x[j] - pt.y[j];
                f += o.lambda_rep * dj * dj;
            }
        return 0.5 * f;
    };
    c.boundary_x = [d, o = s.ordinary](const GamePoint& pt) {
        if (!o.present || o.lambda_term == 0.0) return 0.0;
        double h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dj = pt.x[j] - o.x_target[j];
            h += dj * dj;
        }
        return 0.5 * o.lambda_term * h;
    };
    c.boundary_y = [d, t = s.tagged](const GamePoint& pt,
                                     const std::vector<double>& y0_pref) {
        if (t.lambda_init == 0.0) return 0.0;
        double h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dj = pt.y[j] - y0_pref[j];
            h += dj * dj;
        }
        return 0.5 * t.lambda_init * h;
    };
    return c;
}

struct HamiltonianValue {
    double value = 0.0;
};

// H^i = b^x . p^{ix} + b^y . p^{iy} + <sigma^x, q^{ix}> - f^i, where the
// diffusion matrix is sigma * [I 0] on the B^x block. For the control
// problem reduction pass i = Tagged with empty p_ix / q_ix.
inline HamiltonianValue eval_hamiltonian(Player i, const CoefficientSet& c,
                                         const GamePoint& pt,
                                         const std::vector<double>& p_ix,
                                         const std::vector<double>& p_iy,
                                         const std::vector<double>& q_ix) {
    const std::size_t d = c.dim;
    double h = 0.0;
    if (c.has_ordinary && !p_ix.empty()) {
        const std::vector<double> bx = c.drift_x(pt);
        for (std::size_t j = 0; j < d; ++j) h += bx[j] * p_ix[j];
    }
    if (!p_iy.empty()) {
        const std::vector<double> by = c.drift_y(pt);
        for (std::size_t j = 0; j < d; ++j) h += by[j] * p_iy[j];
    }
    if (c.has_ordinary && !q_ix.empty()) {
        // q^{ix} is d x w_x; only the diagonal meets sigma * I.
        const std::size_t wx = q_ix.size() / d;
        for (std::size_t j = 0; j < d && j < wx; ++j)
            h += c.sigma_x * q_ix[j * wx + j];
    }
    h -= i == Player::Ordinary ? c.run_cost_x(pt) : c.run_cost_y(pt);
    return HamiltonianValue{h};
}

// Maximizer of H^i over the player's control. Closed form for the
// quadratic-in-control scenarios; the total quadratic weight must be
// positive for the argmax to exist.
inline std::vector<double> argmax_control(Player i, const CoefficientSet& c,
                                          const GamePoint& pt,
                                          const std::vector<double>& p_own) {
    if (!c.quadratic_controls)
        throw UnsupportedScenarioError("argmax_control: non-quadratic Hamiltonian");
    const std::size_t d = c.dim;
    std::vector<double> u(d);
    if (i == Player::Tagged) {
        const double w = c.tagged.lambda_cont + c.tagged.lambda_des;
        if (!(w > 0.0))
            throw UnsupportedScenarioError(
                "argmax_control: tagged Hamiltonian not strictly concave in the control");
        const double inv_w = 1.0 / w;
        const std::vector<double> v =
            eval_desired_velocity(c.tagged.vdes, pt.t, c.horizon, d);
        for (std::size_t j = 0; j < d; ++j)
            u[j] = (p_own[j] + c.tagged.lambda_des * v[j]) * inv_w;
    } else {
        if (!(c.ordinary.lambda_cont > 0.0))
            throw UnsupportedScenarioError(
                "argmax_control: ordinary Hamiltonian not strictly concave in the control");
        for (std::size_t j = 0; j < d; ++j) u[j] = p_own[j] / c.ordinary.lambda_cont;
    }
    return u;
}

// Lions-lift derivative terms E[*(d_mu f)] for the two quadratic
// mean-dependent cost forms in use.
enum class MeanQuadraticForm { DistToMean, MeanToPoint };

inline std::vector<double> mean_derivative_quadratic(
    MeanQuadraticForm form, const Slice& s,
    const std::vector<double>& point = {}) {
    if (s.array == nullptr || s.paths() == 0)
        throw std::invalid_argument("mean_derivative_quadratic: empty slice");
    const std::size_t d = s.dim();
    if (form == MeanQuadraticForm::DistToMean) {
        // E[2(Y - E[Y])] vanishes identically.
        return std::vector<double>(d, 0.0);
    }
    const EmpiricalLaw law = empirical_law(s);
    std::vector<double> out(d);
    for (std::size_t j = 0; j < d; ++j) out[j] = 2.0 * (law.mean[j] - point[j]);
    return out;
}

// dt-drift of each adjoint process at one evaluation point, i.e. the
// negated state gradients of the equilibrium Hamiltonians plus their
// mean-field terms. The dist-to-mean mean term is identically zero.
struct AdjointStep {
    std::vector<double> drift_pxx, drift_pxy, drift_pyy, drift_pyx;
};

inline AdjointStep assemble_adjoint_steps(const CoefficientSet& c,
                                          const GamePoint& pt) {
    const std::size_t d = c.dim;
    AdjointStep st;
    st.drift_pyy.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        if (c.tagged.lambda_attr != 0.0)
            st.drift_pyy[j] +=
                c.tagged.lambda_attr * (pt.y[j] - pt.mean_y[j]);
        if (c.tagged.lambda_rep != 0.0) {
            const double ref = c.has_ordinary ? pt.mean_x[j] : c.tagged.q[j];
            st.drift_pyy[j] += c.tagged.lambda_rep * (pt.y[j] - ref);
        }
    }
    if (c.has_ordinary) {
        st.drift_pxx.assign(d, 0.0);
        st.drift_pxy.assign(d, 0.0);
        st.drift_pyx.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            st.drift_pxx[j] = c.ordinary.lambda_rep * (pt.x[j] - pt.y[j]);
            st.drift_pxy[j] = -c.ordinary.lambda_rep * (pt.x[j] - pt.y[j]);
            st.drift_pyx[j] =
                -c.tagged.lambda_rep * (pt.mean_y[j] - pt.mean_x[j]);
        }
    }
    return st;
}

// Boundary rows of the adjoint system.
inline std::vector<double> adjoint_terminal_pxx(const CoefficientSet& c,
                                                const double* x_terminal) {
    std::vector<double> p(c.dim, 0.0);
    for (std::size_t j = 0; j < c.dim; ++j)
        p[j] = -c.ordinary.lambda_term * (x_terminal[j] - c.ordinary.x_target[j]);
    return p;
}

inline std::vector<double> adjoint_initial_pyy(const CoefficientSet& c,
                                               const double* y_initial,
                                               const double* y0_pref) {
    std::vector<double> p(c.dim, 0.0);
    for (std::size_t j = 0; j < c.dim; ++j)
        p[j] = c.tagged.lambda_init * (y_initial[j] - y0_pref[j]);
    return p;
}

// ---------------------------------------------------------------------------
// Cost functionals and the spike-variation equilibrium check.
// ---------------------------------------------------------------------------

// Per-path sample of the preferred initial position; pure in (seed, n, j).
inline std::vector<double> sample_y0_pref(const ScenarioSpec& s,
                                          std::uint64_t seed, std::size_t n) {
    std::vector<double> v(s.dim, 0.0);
    if (s.tagged.lambda_init == 0.0) return v;
    for (std::size_t j = 0; j < s.dim; ++j)
        v[j] = s.tagged.y0_pref.mean[j] +
               s.tagged.y0_pref.stddev * rng::normal(seed, rng::kPreferredInitial, n, j);
    return v;
}

// J^y per path: running cost over [0,T) (left rectangles) plus initial
// cost. The caller supplies an optional deterministic shift applied to
// Y (and hence to its mean) and a control bump on a step set, which is
// how spike perturbations propagate through the backward dynamics.
struct SpikePerturbation {
    std::size_t step_lo = 0, step_hi = 0;  // perturbed steps [lo, hi)
    std::vector<double> bump;              // control offset, empty = none
};

inline double pathwise_cost_tagged(
    const ScenarioSpec& s, const CoefficientSet& c, const TimeGrid& grid,
    const Ensemble& ens, const std::vector<std::vector<double>>& mean_y,
    const std::vector<std::vector<double>>& mean_x,
    const std::vector<double>& y0_pref, std::size_t n,
    const SpikePerturbation* spike = nullptr) {
    const std::size_t d = s.dim;
    const double dt = grid.dt();
    GamePoint pt;
    pt.y.resize(d);
    pt.uy.resize(d);
    pt.mean_y.resize(d);
    if (s.ordinary.present) pt.mean_x.resize(d);

    double cost = 0.0;
    // Cumulative future bump: the backward state shifts by the bump
    // integrated over the perturbed steps still ahead.
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        pt.t = grid.time(k);
        double future = 0.0;
        if (spike != nullptr && !spike->bump.empty()) {
            const std::size_t lo = std::max(spike->step_lo, k);
            if (spike->step_hi > lo)
                future = static_cast<double>(spike->step_hi - lo) * dt;
        }
        const bool bumped = spike != nullptr && !spike->bump.empty() &&
                            k >= spike->step_lo && k < spike->step_hi;
        for (std::size_t j = 0; j < d; ++j) {
            const double shift =
                spike != nullptr && !spike->bump.empty() ? -spike->bump[j] * future : 0.0;
            pt.y[j] = ens.y.at(k, n, j) + shift;
            pt.mean_y[j] = mean_y[k][j] + shift;
            pt.uy[j] = ens.uy.at(k, n, j) + (bumped ? spike->bump[j] : 0.0);
            if (s.ordinary.present) pt.mean_x[j] = mean_x[k][j];
        }
        cost += c.run_cost_y(pt) * dt;
    }
    if (s.tagged.lambda_init != 0.0) {
        GamePoint p0;
        p0.y.resize(d);
        double future = 0.0;
        if (spike != nullptr && !spike->bump.empty())
            future = static_cast<double>(spike->step_hi - spike->step_lo) * dt;
        for (std::size_t j = 0; j < d; ++j) {
            const double shift =
                spike != nullptr && !spike->bump.empty() ? -spike->bump[j] * future : 0.0;
            p0.y[j] = ens.y.at(0, n, j) + shift;
        }
        cost += c.boundary_y(p0, y0_pref);
    }
    return cost;
}

// J^x per path: running cost plus terminal cost. The forward state
// shifts by the bump integrated over perturbed steps already passed.
inline double pathwise_cost_ordinary(const ScenarioSpec& s,
                                     const CoefficientSet& c,
                                     const TimeGrid& grid, const Ensemble& ens,
                                     std::size_t n,
                                     const SpikePerturbation* spike = nullptr) {
    const std::size_t d = s.dim;
    const double dt = grid.dt();
    GamePoint pt;
    pt.x.resize(d);
    pt.ux.resize(d);
    pt.y.resize(d);

    auto elapsed = [&](std::size_t k) {
        if (spike == nullptr || spike->bump.empty()) return 0.0;
        const std::size_t hi = std::min(spike->step_hi, k);
        return hi > spike->step_lo
                   ? static_cast<double>(hi - spike->step_lo) * dt
                   : 0.0;
    };

    double cost = 0.0;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        pt.t = grid.time(k);
        const double past = elapsed(k);
        const bool bumped = spike != nullptr && !spike->bump.empty() &&
                            k >= spike->step_lo && k < spike->step_hi;
        for (std::size_t j = 0; j < d; ++j) {
            const double shift =
                spike != nullptr && !spike->bump.empty() ? spike->bump[j] * past : 0.0;
            pt.x[j] = ens.x.at(k, n, j) + shift;
            pt.ux[j] = ens.ux.at(k, n, j) + (bumped ? spike->bump[j] : 0.0);
            pt.y[j] = ens.y.at(k, n, j);
        }
        cost += c.run_cost_x(pt) * dt;
    }
    GamePoint pT;
    pT.x.resize(d);
    const double past = elapsed(grid.steps());
    for (std::size_t j = 0; j < d; ++j) {
        const double shift =
            spike != nullptr && !spike->bump.empty() ? spike->bump[j] * past : 0.0;
        pT.x[j] = ens.x.at(grid.steps(), n, j) + shift;
    }
    cost += c.boundary_x(pT);
    return cost;
}

struct SpikeTrial {
    Player player = Player::Tagged;
    double t_lo = 0.0, eps = 0.0;
    std::vector<double> bump;
    double mean_delta = 0.0;  // J(perturbed) - J(candidate)
    double std_error = 0.0;
};

struct SpikeReport {
    std::vector<SpikeTrial> trials;
    double worst_sigmas = 0.0;  // most negative mean_delta / se
    bool pass = true;           // all deltas >= -3 MC standard errors
};

// Numerical equilibrium check: random spike perturbations of either
// crowd's control must not lower that crowd's own cost beyond Monte
// Carlo noise (3 standard errors of the paired cost-delta estimator).
inline SpikeReport spike_variation_check(
    const ScenarioSpec& spec, const TimeGrid& grid, const Ensemble& ens,
    std::size_t trials, double eps, double bump_magnitude,
    std::uint64_t trial_seed) {
    const CoefficientSet coeffs = make_coefficients(spec);
    const std::size_t d = spec.dim;
    const std::size_t paths = ens.paths();
    const double T = grid.horizon();
    const std::vector<std::vector<double>> mean_y = mean_series(ens.y);
    const std::vector<std::vector<double>> mean_x =
        spec.ordinary.present ? mean_series(ens.x)
                              : std::vector<std::vector<double>>();

    SpikeReport report;
    report.trials.reserve(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        SpikeTrial trial;
        trial.player = spec.ordinary.present && (i % 2 == 1) ? Player::Ordinary
                                                             : Player::Tagged;
        trial.eps = eps;
        trial.t_lo = rng::uniform(trial_seed, rng::kSpikeTrials, i, 0) *
                     std::max(0.0, T - eps);
        const double angle = rng::uniform(trial_seed, rng::kSpikeTrials, i, 1) *
                             2.0 * 3.14159265358979323846;
        trial.bump.assign(d, 0.0);
        if (d >= 1) trial.bump[0] = bump_magnitude * std::cos(angle);
        if (d >= 2) trial.bump[1] = bump_magnitude * std::sin(angle);

        SpikePerturbation spike;
        spike.bump = trial.bump;
        spike.step_lo = static_cast<std::size_t>(std::ceil(trial.t_lo / grid.dt() - 1e-12));
        spike.step_hi = std::min(
            grid.steps(),
            static_cast<std::size_t>(std::ceil((trial.t_lo + eps) / grid.dt() - 1e-12)));
        if (spike.step_hi <= spike.step_lo || eps <= 0.0) {
            trial.mean_delta = 0.0;
            trial.std_error = 0.0;
            report.trials.push_back(trial);
            continue;
        }

        auto delta = [&](std::size_t n) {
            if (trial.player == Player::Tagged) {
                const std::vector<double> y0p =
                    sample_y0_pref(spec, spec.solver.seed, n);
                return pathwise_cost_tagged(spec, coeffs, grid, ens, mean_y,
                                            mean_x, y0p, n, &spike) -
                       pathwise_cost_tagged(spec, coeffs, grid, ens, mean_y,
                                            mean_x, y0p, n, nullptr);
            }
            return pathwise_cost_ordinary(spec, coeffs, grid, ens, n, &spike) -
                   pathwise_cost_ordinary(spec, coeffs, grid, ens, n, nullptr);
        };
        auto sums = tree_reduce(paths, 2, [&](std::size_t n, double* out) {
            const double x = delta(n);
            out[0] = x;
            out[1] = x * x;
        });
        const double np = static_cast<double>(paths);
        trial.mean_delta = sums[0] / np;
        const double var =
            std::max(0.0, sums[1] / np - trial.mean_delta * trial.mean_delta);
        trial.std_error = std::sqrt(var / np);
        report.trials.push_back(trial);
    }

    for (const auto& t : report.trials) {
        if (t.std_error > 0.0) {
            const double sig = t.mean_delta / t.std_error;
            report.worst_sigmas = std::min(report.worst_sigmas, sig);
            if (t.mean_delta < -3.0 * t.std_error) report.pass = false;
        } else if (t.mean_delta < 0.0) {
            report.pass = false;
        }
    }
    return report;
}

} // namespace mftg
