#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vecchia {

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Calls f(i) for i in [0, n) on up to `threads` workers. Callers write results
// into per-index slots, so the outcome does not depend on scheduling. The
// exception from the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    if (n == 0) return;
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr err;
    std::size_t err_index = n;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < err_index) err_index = i, err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace vecchia
