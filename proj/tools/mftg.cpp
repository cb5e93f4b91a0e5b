// Command-line front end: run scenarios, verify the numerical oracles,
// list builtins, and export canonical scenario files.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mftg/artifacts.hpp"
#include "mftg/game.hpp"
#include "mftg/lq.hpp"
#include "mftg/lsmc.hpp"
#include "mftg/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitIo = 4;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw mftg::IoError("cannot read scenario file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Resolve a scenario from --scenario/--file, then apply --set overrides
// and the convenience flags on top of its canonical serialization.
mftg::ScenarioSpec resolve_scenario(const std::string& name,
                                    const std::string& file,
                                    const std::vector<std::string>& overrides,
                                    long long seed, long long paths,
                                    long long steps) {
    if (name.empty() == file.empty())
        throw mftg::ScenarioValidationError(
            "exactly one of --scenario and --file is required");
    mftg::ScenarioSpec spec = name.empty()
                                  ? mftg::parse_scenario(read_file(file))
                                  : mftg::builtin_scenario(name);

    if (!overrides.empty()) {
        std::map<std::string, std::string> kv;
        std::istringstream in(mftg::serialize_scenario(spec));
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find(" = ");
            kv[line.substr(0, eq)] = line.substr(eq + 3);
        }
        for (const std::string& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos || eq == 0)
                throw mftg::ScenarioValidationError(
                    "--set expects key=value, got '" + o + "'");
            kv[o.substr(0, eq)] = o.substr(eq + 1);
        }
        std::string text;
        for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
        spec = mftg::parse_scenario(text);
    }
    if (seed >= 0) spec.solver.seed = static_cast<std::uint64_t>(seed);
    if (paths > 0) spec.solver.paths = static_cast<std::size_t>(paths);
    if (steps > 0) spec.solver.steps = static_cast<std::size_t>(steps);
    mftg::validate_scenario(spec);
    return spec;
}

std::string pick_solver(const std::string& requested,
                        const mftg::ScenarioSpec& spec) {
    if (requested == "auto")
        return spec.is_lq_decoupled() ? "lq" : "lsmc";
    if (requested == "lq" && !spec.is_lq_decoupled())
        throw mftg::ScenarioValidationError(
            "solver: lq requires a decoupled linear-quadratic scenario");
    return requested;
}

mftg::RunArtifacts solve(const mftg::ScenarioSpec& spec,
                         const std::string& solver) {
    mftg::RunArtifacts art;
    art.spec = spec;
    art.solver_used = solver;
    const mftg::TimeGrid grid(spec.horizon, spec.solver.steps);
    if (solver == "lq") {
        mftg::LQSolveResult r =
            mftg::lq_solve(spec, grid, spec.solver.paths, spec.solver.seed);
        art.ensemble = std::move(r.ensemble);
        art.diagnostics.converged = true;
    } else {
        mftg::SolveResult r = mftg::solve_equilibrium(spec);
        art.ensemble = std::move(r.ensemble);
        art.diagnostics = std::move(r.diagnostics);
    }
    return art;
}

int cmd_run(const mftg::ScenarioSpec& spec, const std::string& solver_flag,
            const std::string& out_dir) {
    const std::string solver = pick_solver(solver_flag, spec);
    const mftg::RunArtifacts art = solve(spec, solver);
    mftg::write_run_artifacts(out_dir, art);
    if (!art.diagnostics.converged) {
        std::cerr << "non-convergence after " << art.diagnostics.iterations
                  << " iterations (residual "
                  << (art.diagnostics.residuals.empty()
                          ? 0.0
                          : art.diagnostics.residuals.back())
                  << "); artifacts written to " << out_dir << "\n";
        return kExitNoConvergence;
    }
    std::cout << "solver=" << solver
              << " iterations=" << art.diagnostics.iterations
              << " artifacts=" << out_dir << "\n";
    return kExitOk;
}

void report_line(const std::string& check, bool pass, double value) {
    std::cout << "{\"check\": \"" << check << "\", \"pass\": "
              << (pass ? "true" : "false") << ", \"value\": " << value << "}\n";
}

// Cross-solver oracle: the regression solver must reproduce the
// matching solver's mean path on a decoupled LQ scenario.
int verify_oracles(mftg::ScenarioSpec spec) {
    if (!spec.is_lq_decoupled())
        throw mftg::ScenarioValidationError(
            "verify oracles: scenario must be decoupled linear-quadratic");
    const mftg::TimeGrid grid(spec.horizon, spec.solver.steps);
    const mftg::LQSolveResult lq =
        mftg::lq_solve(spec, grid, spec.solver.paths, spec.solver.seed);
    const mftg::SolveResult ls = mftg::solve_equilibrium(spec);

    double worst = 0.0;
    const auto m_lq = mftg::mean_series(lq.ensemble.y);
    const auto m_ls = mftg::mean_series(ls.ensemble.y);
    for (std::size_t k = 0; k < m_lq.size(); ++k)
        for (std::size_t j = 0; j < spec.dim; ++j)
            worst = std::max(worst, std::abs(m_lq[k][j] - m_ls[k][j]));
    const bool pass = ls.diagnostics.converged && worst <= 0.02;
    report_line("lsmc_vs_lq_mean_path_sup", pass, worst);
    return pass ? kExitOk : 1;
}

int verify_spike(const mftg::ScenarioSpec& spec) {
    const mftg::TimeGrid grid(spec.horizon, spec.solver.steps);
    const mftg::SolveResult r = mftg::solve_equilibrium(spec);
    if (!r.diagnostics.converged) {
        report_line("spike_preconvergence", false,
                    static_cast<double>(r.diagnostics.iterations));
        return kExitNoConvergence;
    }
    const mftg::SpikeReport rep = mftg::spike_variation_check(
        spec, grid, r.ensemble, 200, 0.05, 0.5, spec.solver.seed + 1);
    report_line("spike_worst_sigmas", rep.pass, rep.worst_sigmas);
    return rep.pass ? kExitOk : 1;
}

// Martingale oracle Y_T = B^y_T, zero driver: the conditional expectation
// is known exactly (Y_k = B_k), so the sup error is pure regression noise
// and must decrease as the sample grows.
int verify_convergence(std::uint64_t seed) {
    constexpr std::size_t steps = 50;
    std::vector<double> errs;
    for (std::size_t paths : {2500u, 10000u, 40000u}) {
        const mftg::TimeGrid grid(1.0, steps);
        const mftg::BrownianBundle bundle(grid, paths, 0, 1, seed);
        std::vector<double> terminal(bundle.paths());
        for (std::size_t n = 0; n < bundle.paths(); ++n)
            terminal[n] = bundle.levels_y().at(steps, n, 0);
        const mftg::BackwardResult r = mftg::backward_lsmc(
            grid, bundle, terminal,
            [](std::size_t, std::size_t, double* out) { out[0] = 0.0; },
            [&](std::size_t k) {
                Eigen::MatrixXd in(static_cast<Eigen::Index>(bundle.paths()), 1);
                for (std::size_t n = 0; n < bundle.paths(); ++n)
                    in(static_cast<Eigen::Index>(n), 0) =
                        bundle.levels_y().at(k, n, 0);
                return in;
            },
            mftg::RegressionBasis{2}, 1e-8);
        double sup = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) {
            auto s2 = mftg::tree_reduce(bundle.paths(), 1,
                                        [&](std::size_t n, double* out) {
                                            const double e =
                                                r.y.at(k, n, 0) -
                                                bundle.levels_y().at(k, n, 0);
                                            out[0] = e * e;
                                        });
            sup = std::max(sup,
                           std::sqrt(s2[0] / static_cast<double>(bundle.paths())));
        }
        errs.push_back(sup);
    }
    const bool pass = errs[0] >= errs[1] * 0.999 && errs[1] >= errs[2] * 0.999 &&
                      errs[2] <= 0.05;
    report_line("martingale_error_decreasing", pass, errs[2]);
    return pass ? kExitOk : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field crowd game simulator"};
    app.require_subcommand(1);

    std::string scenario, file, solver = "auto", out_dir = "out", suite;
    std::vector<std::string> overrides;
    long long seed = -1, paths = 0, steps = 0;

    auto add_scenario_flags = [&](CLI::App* cmd, bool need_scenario) {
        cmd->add_option("--scenario", scenario, "builtin scenario name");
        cmd->add_option("--file", file, "scenario file path");
        cmd->add_option("--set", overrides, "override key=value (repeatable)");
        cmd->add_option("--seed", seed, "master RNG seed");
        cmd->add_option("--paths", paths, "number of Monte Carlo paths");
        cmd->add_option("--steps", steps, "number of time steps");
        (void)need_scenario;
    };

    CLI::App* run = app.add_subcommand("run", "solve a scenario and write artifacts");
    add_scenario_flags(run, true);
    run->add_option("--solver", solver, "lsmc | lq | auto")
        ->check(CLI::IsMember({"lsmc", "lq", "auto"}));
    run->add_option("--out", out_dir, "output directory");

    CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("suite", suite, "oracles | spike | convergence")
        ->required()
        ->check(CLI::IsMember({"oracles", "spike", "convergence"}));
    add_scenario_flags(verify, false);

    CLI::App* list = app.add_subcommand("list-scenarios", "print builtin names");
    CLI::App* exp = app.add_subcommand("export-spec", "print a canonical scenario file");
    add_scenario_flags(exp, true);
    exp->add_option("--out", out_dir, "write to file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const std::string& n : mftg::builtin_scenario_names())
                std::cout << n << "\n";
            return kExitOk;
        }
        if (exp->parsed()) {
            const mftg::ScenarioSpec spec =
                resolve_scenario(scenario, file, overrides, seed, paths, steps);
            const std::string text = mftg::serialize_scenario(spec);
            if (exp->count("--out")) {
                std::ofstream f(out_dir, std::ios::binary);
                if (!f) throw mftg::IoError("cannot write: " + out_dir);
                f << text;
            } else {
                std::cout << text;
            }
            return kExitOk;
        }
        if (run->parsed()) {
            const mftg::ScenarioSpec spec =
                resolve_scenario(scenario, file, overrides, seed, paths, steps);
            return cmd_run(spec, solver, out_dir);
        }
        if (verify->parsed()) {
            if (suite == "convergence")
                return verify_convergence(seed >= 0 ? static_cast<std::uint64_t>(seed) : 1);
            if (scenario.empty() && file.empty())
                scenario = suite == "spike" ? "bidir" : "kt_set2";
            const mftg::ScenarioSpec spec =
                resolve_scenario(scenario, file, overrides, seed, paths, steps);
            return suite == "oracles" ? verify_oracles(spec) : verify_spike(spec);
        }
    } catch (const mftg::ScenarioValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const mftg::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
