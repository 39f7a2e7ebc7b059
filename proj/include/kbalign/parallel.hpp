#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace kbalign {

// Bounded parallel map with stable output order. The first worker
// exception is rethrown after all workers join.
template <class In, class F>
auto parallel_map(const std::vector<In>& items, F f, int max_parallel)
    -> std::vector<decltype(f(items[0]))> {
    using Out = decltype(f(items[0]));
    std::vector<Out> results(items.size());
    if (items.empty()) return results;
    int workers = std::max(1, std::min<int>(max_parallel, int(items.size())));
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;

    auto body = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            try {
                results[i] = f(items[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mu);
                if (!error) error = std::current_exception();
                failed = true;
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return results;
}

}  // namespace kbalign
