#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mftg/ensemble.hpp"
#include "mftg/grid.hpp"
#include "mftg/lsmc.hpp"
#include "mftg/scenario.hpp"

namespace mftg {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed-bin 2-D histogram of a cross-section over the first two state
// components. The bounding box is auto-fitted to the samples and padded
// by 10%; boundary samples land in the edge bins, so counts always sum
// to the number of paths.
struct DensityGrid {
    double t = 0.0;
    std::size_t bins_x = 50, bins_y = 50;
    double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    std::vector<std::uint64_t> counts;  // bins_y rows of bins_x

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

inline DensityGrid density_histogram(const Slice& s, double t,
                                     std::size_t bins = 50) {
    if (s.array == nullptr || s.paths() == 0 || s.dim() < 2)
        throw std::invalid_argument("density_histogram: need a 2-D slice");
    DensityGrid g;
    g.t = t;
    g.bins_x = g.bins_y = bins;
    g.counts.assign(bins * bins, 0);

    double x_lo = s.row(0)[0], x_hi = x_lo, y_lo = s.row(0)[1], y_hi = y_lo;
    for (std::size_t n = 0; n < s.paths(); ++n) {
        const double* v = s.row(n);
        x_lo = std::min(x_lo, v[0]);
        x_hi = std::max(x_hi, v[0]);
        y_lo = std::min(y_lo, v[1]);
        y_hi = std::max(y_hi, v[1]);
    }
    auto pad = [](double lo, double hi) {
        const double w = hi - lo;
        return w > 0.0 ? 0.05 * w : 0.5;  // 10% total padding
    };
    const double px = pad(x_lo, x_hi), py = pad(y_lo, y_hi);
    g.x_lo = x_lo - px;
    g.x_hi = x_hi + px;
    g.y_lo = y_lo - py;
    g.y_hi = y_hi + py;

    const double bw_x = (g.x_hi - g.x_lo) / static_cast<double>(bins);
    const double bw_y = (g.y_hi - g.y_lo) / static_cast<double>(bins);
    for (std::size_t n = 0; n < s.paths(); ++n) {
        const double* v = s.row(n);
        auto bin = [bins](double x, double lo, double bw) {
            auto i = static_cast<long long>((x - lo) / bw);
            return static_cast<std::size_t>(
                std::clamp<long long>(i, 0, static_cast<long long>(bins) - 1));
        };
        g.counts[bin(v[1], g.y_lo, bw_y) * bins + bin(v[0], g.x_lo, bw_x)] += 1;
    }
    return g;
}

// Mean control speed E||u_k|| per time point.
inline std::vector<double> speed_profile(const PathArray& controls) {
    if (controls.empty())
        throw std::invalid_argument("speed_profile: no control paths");
    std::vector<double> out(controls.points());
    for (std::size_t k = 0; k < controls.points(); ++k) {
        auto sum = tree_reduce(controls.paths(), 1, [&](std::size_t n, double* o) {
            const double* u = controls.row(k, n);
            double s2 = 0.0;
            for (std::size_t j = 0; j < controls.dim(); ++j) s2 += u[j] * u[j];
            o[0] = std::sqrt(s2);
        });
        out[k] = sum[0] / static_cast<double>(controls.paths());
    }
    return out;
}

namespace detail {

// Shortest exact decimal round trip, locale independent.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace detail

inline std::string render_density(const DensityGrid& g) {
    std::string s;
    s += "t " + detail::format_double(g.t) + "\n";
    s += "bins " + std::to_string(g.bins_x) + " " + std::to_string(g.bins_y) + "\n";
    s += "bbox " + detail::format_double(g.x_lo) + " " +
         detail::format_double(g.x_hi) + " " + detail::format_double(g.y_lo) +
         " " + detail::format_double(g.y_hi) + "\n";
    for (std::size_t r = 0; r < g.bins_y; ++r) {
        for (std::size_t c = 0; c < g.bins_x; ++c) {
            if (c) s += " ";
            s += std::to_string(g.counts[r * g.bins_x + c]);
        }
        s += "\n";
    }
    return s;
}

struct RunArtifacts {
    ScenarioSpec spec;
    std::string solver_used;  // "lsmc" or "lq"
    Ensemble ensemble;
    Diagnostics diagnostics;
};

// Writes one run's artifacts into out_dir:
//   scenario.txt        resolved spec, canonical serialization
//   paths.csv           per-path state/control series (capped path count)
//   density_y_<k>.txt   tagged crowd histograms at 5 snapshot times
//   density_x_<k>.txt   ordinary crowd histograms (game scenarios)
//   distance_to_mean.csv, speed_profile.csv
//   diagnostics.json
inline void write_run_artifacts(const std::filesystem::path& out_dir,
                                const RunArtifacts& art,
                                std::size_t max_csv_paths = 200) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory: " + out_dir.string());

    const Ensemble& ens = art.ensemble;
    const std::size_t pts = ens.y.points();
    const std::size_t steps = pts - 1;
    const TimeGrid grid(art.spec.horizon, steps);
    const std::size_t d = ens.y.dim();
    const bool ordinary = ens.has_ordinary();

    detail::write_file(out_dir / "scenario.txt", serialize_scenario(art.spec));

    {
        std::string csv = "t,path";
        for (std::size_t j = 0; j < d; ++j) csv += ",y" + std::to_string(j);
        for (std::size_t j = 0; j < d; ++j) csv += ",uy" + std::to_string(j);
        if (ordinary) {
            for (std::size_t j = 0; j < d; ++j) csv += ",x" + std::to_string(j);
            for (std::size_t j = 0; j < d; ++j) csv += ",ux" + std::to_string(j);
        }
        csv += "\n";
        const std::size_t np = std::min(ens.paths(), max_csv_paths);
        for (std::size_t k = 0; k < pts; ++k)
            for (std::size_t n = 0; n < np; ++n) {
                csv += detail::format_double(grid.time(k)) + "," + std::to_string(n);
                for (std::size_t j = 0; j < d; ++j)
                    csv += "," + detail::format_double(ens.y.at(k, n, j));
                for (std::size_t j = 0; j < d; ++j)
                    csv += "," + detail::format_double(ens.uy.at(k, n, j));
                if (ordinary) {
                    for (std::size_t j = 0; j < d; ++j)
                        csv += "," + detail::format_double(ens.x.at(k, n, j));
                    for (std::size_t j = 0; j < d; ++j)
                        csv += "," + detail::format_double(ens.ux.at(k, n, j));
                }
                csv += "\n";
            }
        detail::write_file(out_dir / "paths.csv", csv);
    }

    const std::size_t snaps[] = {0, steps / 4, steps / 2, 3 * steps / 4, steps};
    for (std::size_t k : snaps) {
        detail::write_file(
            out_dir / ("density_y_" + std::to_string(k) + ".txt"),
            render_density(density_histogram(slice(ens.y, k), grid.time(k))));
        if (ordinary)
            detail::write_file(
                out_dir / ("density_x_" + std::to_string(k) + ".txt"),
                render_density(density_histogram(slice(ens.x, k), grid.time(k))));
    }

    {
        const std::vector<double> dy = distance_to_mean_series(ens, Crowd::Tagged);
        const std::vector<double> dx =
            ordinary ? distance_to_mean_series(ens, Crowd::Ordinary)
                     : std::vector<double>();
        std::string csv = ordinary ? "t,tagged,ordinary\n" : "t,tagged\n";
        for (std::size_t k = 0; k < pts; ++k) {
            csv += detail::format_double(grid.time(k)) + "," +
                   detail::format_double(dy[k]);
            if (ordinary) csv += "," + detail::format_double(dx[k]);
            csv += "\n";
        }
        detail::write_file(out_dir / "distance_to_mean.csv", csv);
    }

    {
        const std::vector<double> sy = speed_profile(ens.uy);
        const std::vector<double> sx =
            ordinary ? speed_profile(ens.ux) : std::vector<double>();
        std::string csv = ordinary ? "t,tagged,ordinary\n" : "t,tagged\n";
        for (std::size_t k = 0; k < pts; ++k) {
            csv += detail::format_double(grid.time(k)) + "," +
                   detail::format_double(sy[k]);
            if (ordinary) csv += "," + detail::format_double(sx[k]);
            csv += "\n";
        }
        detail::write_file(out_dir / "speed_profile.csv", csv);
    }

    {
        std::string json = "{\n";
        json += "  \"solver\": \"" + art.solver_used + "\",\n";
        json += "  \"converged\": ";
        json += art.diagnostics.converged ? "true" : "false";
        json += ",\n  \"iterations\": " + std::to_string(art.diagnostics.iterations);
        json += ",\n  \"max_condition\": " +
                detail::format_double(art.diagnostics.max_condition);
        json += ",\n  \"residuals\": [";
        for (std::size_t i = 0; i < art.diagnostics.residuals.size(); ++i) {
            if (i) json += ", ";
            json += detail::format_double(art.diagnostics.residuals[i]);
        }
        json += "]\n}\n";
        detail::write_file(out_dir / "diagnostics.json", json);
    }
}

} // namespace mftg
