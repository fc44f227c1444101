#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lensless {

inline int resolve_workers(int requested, size_t n) {
    int w = requested > 0 ? requested : (int)std::thread::hardware_concurrency();
    if (w < 1) w = 1;
    if (n > 0 && (size_t)w > n) w = (int)n;
    return w;
}

// Bounded pool: runs fn(slot, i) for i in [0, n) with slot in [0, workers).
// Items are handed out dynamically; the slot index lets callers keep
// per-worker state (operators, cloned networks) allocated up front. Results
// must go to per-index slots or per-index files; completion order is
// unspecified. The first exception cancels remaining items and is rethrown.
inline void parallel_for(size_t n, int workers, const std::function<void(int, size_t)>& fn) {
    int w = resolve_workers(workers, n);
    if (w == 1) {
        for (size_t i = 0; i < n; ++i) fn(0, i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve((size_t)w);
    for (int s = 0; s < w; ++s) {
        pool.emplace_back([&, s] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(s, i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace lensless
