#pragma once

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace mftg {

// Worker-thread cap, read from the environment once per call site.
// 0 or unset means single-threaded.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("MFTG_THREADS")) {
        const long v = std::atol(env);
        if (v > 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

// Runs body(i) for i in [0, n). Iterations must touch disjoint state.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = worker_count();
    if (workers <= 1 || n < 2 * workers) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Deterministic pairwise reduction of m-vector leaves over [0, n).
//
// Leaves are summed serially inside fixed blocks of 256, and block
// partials are combined in a fixed binary tree. The float result is
// therefore bit-identical for any worker count.
inline std::vector<double> tree_reduce(
    std::size_t n, std::size_t m,
    const std::function<void(std::size_t, double*)>& leaf) {
    constexpr std::size_t kBlock = 256;
    const std::size_t blocks = n == 0 ? 0 : (n + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> partial(blocks, std::vector<double>(m, 0.0));

    parallel_for(blocks, [&](std::size_t b) {
        std::vector<double> acc(m, 0.0), buf(m, 0.0);
        const std::size_t lo = b * kBlock;
        const std::size_t hi = std::min(n, lo + kBlock);
        for (std::size_t i = lo; i < hi; ++i) {
            leaf(i, buf.data());
            for (std::size_t j = 0; j < m; ++j) acc[j] += buf[j];
        }
        partial[b] = std::move(acc);
    });

    if (blocks == 0) return std::vector<double>(m, 0.0);

    // Fixed pairwise tree over block partials.
    std::size_t count = blocks;
    while (count > 1) {
        const std::size_t half = (count + 1) / 2;
        for (std::size_t i = 0; i + half < count; ++i)
            for (std::size_t j = 0; j < m; ++j)
                partial[i][j] += partial[i + half][j];
        count = half;
    }
    return partial[0];
}

} // namespace mftg
