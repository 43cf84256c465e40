#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace signtrack::detail {

/// Runs `work(i)` for i in [0, n) on up to `threads` workers. Callers write
/// into per-index slots and reduce afterwards in index order. The exception
/// from the lowest failing index is rethrown.
template <class Work>
void parallel_for(int n, int threads, Work&& work) {
    const int workers = std::clamp(threads, 1, std::max(n, 1));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mutex;
    int failed_index = n;
    std::exception_ptr failure;
    auto loop = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                work(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace signtrack::detail
