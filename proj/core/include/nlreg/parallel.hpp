#pragma once
// Deterministic parallel loop: each index is computed independently, so results do not
// depend on the thread count. NLREG_THREADS overrides the default.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nlreg {

inline unsigned thread_count() {
    if (const char* s = std::getenv("NLREG_THREADS")) {
        const int n = std::atoi(s);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

template <class F>
void parallel_for(std::size_t n, F&& f) {
    const unsigned T = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (T <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    pool.reserve(T);
    for (unsigned t = 0; t < T; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += T) f(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(m);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace nlreg
