#pragma once

// Thread helpers for trial-parallel Monte Carlo. Work is split into fixed
// index ranges so that results are reduced in trial order and never depend
// on the worker count.

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace fvqoc {

// Effective worker count: explicit request > FVQOC_THREADS > hardware.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FVQOC_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). fn must only touch state owned by index i.
inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
    threads = resolve_threads(threads);
    if (threads <= 1 || n <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    if (threads > n) threads = static_cast<int>(n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const long chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const long lo = t * chunk;
        const long hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (long i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fvqoc
