#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rrlab {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Indices are
/// split into contiguous blocks; fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn)
{
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t const block = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t const begin = w * block;
        std::size_t const end = std::min(count, begin + block);
        if (begin >= end) break;
        threads.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Collects fn(i) into a vector indexed by i.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t count, unsigned workers, Fn&& fn)
{
    std::vector<T> out(count);
    parallel_for(count, workers, [&](std::size_t i) { out[i] = fn(i); });
    return out;
}

}  // namespace rrlab
