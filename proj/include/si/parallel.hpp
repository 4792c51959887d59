#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace si {

/// Worker count: an explicit positive request, else $SI_JOBS, else the hardware concurrency.
inline int resolve_jobs(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SI_JOBS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (const std::exception&) {
        }
        throw InputError(std::string("SI_JOBS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, count). Each index writes only its own output
/// slot, so results do not depend on the worker count. The first exception is
/// rethrown after all workers stop.
template <class Body>
void parallel_for(Index count, int jobs, Body&& body) {
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::max<Index>(count, 1))));
    if (jobs == 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const Index i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace si
