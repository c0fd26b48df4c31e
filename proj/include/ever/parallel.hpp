// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ever {

/// Worker count: an explicit request wins, then EVER_THREADS, then the
/// hardware concurrency.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char *env = std::getenv("EVER_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk) for chunk in [0, n_chunks). Chunks are claimed in order by
/// at most `threads` workers; with one worker everything runs inline. The
/// first exception thrown by any chunk is rethrown.
template <class Fn>
void parallel_for(std::size_t n_chunks, int threads, Fn &&fn) {
    const auto workers = std::min<std::size_t>(n_chunks, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr error;
    auto work = [&] {
        for (;;) {
            std::size_t c;
            {
                std::lock_guard lock(mu);
                if (next >= n_chunks || error) return;
                c = next++;
            }
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace ever
