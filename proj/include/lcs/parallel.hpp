#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lcs {

// Process-wide default worker count for sample loops. 1 means serial.
inline unsigned &default_threads()
{
    static unsigned n = 1;
    return n;
}

// Runs fn(i) for i in [0, count). Work is split into contiguous blocks; callers
// write results into per-index slots and reduce afterwards in index order, so
// outcomes never depend on the thread count. The exception from the lowest
// failing block is rethrown.
template <class Fn>
void parallel_for(std::size_t count, Fn &&fn, unsigned threads = default_threads())
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    const std::size_t block = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            const std::size_t lo = t * block;
            const std::size_t hi = std::min(count, lo + block);
            try {
                for (std::size_t i = lo; i < hi; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto &th : pool) {
        th.join();
    }
    for (auto &e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace lcs
