#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hrbf {

/// Resolves a requested thread count; 0 means "all hardware threads".
inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end, chunk) over [0, n) split into contiguous chunks.
/// Chunk boundaries depend only on n and the thread count, and every index is
/// visited exactly once, so any per-index output is independent of scheduling.
template <class Body>
void parallel_chunks(std::size_t n, unsigned threads, Body&& body) {
    threads = resolve_threads(threads);
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(threads, n);
    if (workers <= 1) {
        body(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end, w] {
            try {
                body(begin, end, w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace hrbf
