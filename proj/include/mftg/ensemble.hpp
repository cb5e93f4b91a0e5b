#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mftg/brownian.hpp"
#include "mftg/grid.hpp"
#include "mftg/reduce.hpp"

namespace mftg {

// View of one time slice of a PathArray: the cross-section over paths.
struct Slice {
    const PathArray* array = nullptr;
    std::size_t k = 0;

    std::size_t paths() const { return array->paths(); }
    std::size_t dim() const { return array->dim(); }
    const double* row(std::size_t n) const { return array->row(k, n); }
};

inline Slice slice(const PathArray& a, std::size_t k) { return Slice{&a, k}; }

// First and second empirical moments of a cross-section; stands in for
// the marginal law wherever coefficients depend on it.
struct EmpiricalLaw {
    std::vector<double> mean;           // d
    std::vector<double> second_moment;  // d x d, row major
    std::size_t samples = 0;

    std::size_t dim() const { return mean.size(); }
};

inline EmpiricalLaw empirical_law(const Slice& s) {
    if (s.array == nullptr || s.paths() == 0)
        throw std::invalid_argument("empirical_law: empty slice");
    const std::size_t d = s.dim();
    const std::size_t m = d + d * d;
    auto sums = tree_reduce(s.paths(), m, [&](std::size_t n, double* out) {
        const double* v = s.row(n);
        for (std::size_t i = 0; i < d; ++i) out[i] = v[i];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) out[d + i * d + j] = v[i] * v[j];
    });
    EmpiricalLaw law;
    law.samples = s.paths();
    law.mean.resize(d);
    law.second_moment.resize(d * d);
    const double inv = 1.0 / static_cast<double>(s.paths());
    for (std::size_t i = 0; i < d; ++i) law.mean[i] = sums[i] * inv;
    for (std::size_t i = 0; i < d * d; ++i) law.second_moment[i] = sums[d + i] * inv;
    return law;
}

// N particle paths of the coupled system. X is the ordinary (forward)
// crowd, Y the tagged (backward) crowd, Z the martingale integrand,
// Ux/Uy the controls. Arrays that a scenario does not use stay empty.
struct Ensemble {
    PathArray x;   // (M+1) x N x d
    PathArray y;   // (M+1) x N x d
    PathArray z;   // (M+1) x N x (d * (w_x + w_y))
    PathArray ux;  // (M+1) x N x d
    PathArray uy;  // (M+1) x N x d

    std::size_t paths() const { return y.empty() ? x.paths() : y.paths(); }
    bool has_ordinary() const { return !x.empty(); }
};

enum class Crowd { Tagged, Ordinary };

// Mean over paths of the path-to-crowd-mean distance, per time point.
inline std::vector<double> distance_to_mean_series(const Ensemble& ens,
                                                   Crowd which) {
    const PathArray& pos = which == Crowd::Tagged ? ens.y : ens.x;
    if (pos.empty())
        throw std::invalid_argument("distance_to_mean_series: crowd not simulated");
    std::vector<double> series(pos.points());
    for (std::size_t k = 0; k < pos.points(); ++k) {
        const EmpiricalLaw law = empirical_law(slice(pos, k));
        auto sum = tree_reduce(pos.paths(), 1, [&](std::size_t n, double* out) {
            const double* v = pos.row(k, n);
            double s2 = 0.0;
            for (std::size_t j = 0; j < pos.dim(); ++j) {
                const double dj = v[j] - law.mean[j];
                s2 += dj * dj;
            }
            out[0] = std::sqrt(s2);
        });
        series[k] = sum[0] / static_cast<double>(pos.paths());
    }
    return series;
}

// Mean position per time point.
inline std::vector<std::vector<double>> mean_series(const PathArray& pos) {
    std::vector<std::vector<double>> out(pos.points());
    for (std::size_t k = 0; k < pos.points(); ++k)
        out[k] = empirical_law(slice(pos, k)).mean;
    return out;
}

inline bool all_finite(const PathArray& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace mftg
