#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace via {

// Worker cap: VIA_THREADS env var, default 1 (fully sequential, so default
// runs are byte-reproducible without qualification).
inline int worker_count() {
    const char* env = std::getenv("VIA_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    if (n <= 1) return 1;
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::min(n, std::max(1, hw));
}

// Index-parallel map over [0, n). Safe only for bodies writing disjoint
// outputs; every call site here satisfies that, so results do not depend
// on the worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
        const std::size_t lo = static_cast<std::size_t>(w) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace via
