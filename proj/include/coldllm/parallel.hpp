#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace coldllm {

// Runs fn(k) for k in [0, n) on up to `max_inflight` threads. The first
// exception stops further dispatch and is rethrown once all workers exit.
template <class Fn>
void parallel_for_bounded(std::size_t n, std::size_t max_inflight, Fn&& fn) {
    const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_inflight));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!failed.load()) {
                const std::size_t k = next.fetch_add(1);
                if (k >= n) return;
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace coldllm
