#ifndef HLSD_PARALLEL_HPP
#define HLSD_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hlsd {

/// Runs body(i) for i in [0, count). Each index is handled by exactly one worker, so callers
/// that write into per-index slots get identical results for any thread count.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body)
{
    const std::size_t workers = std::min<std::size_t>(threads > 1 ? std::size_t(threads) : 1, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers)
                    body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace hlsd

#endif
