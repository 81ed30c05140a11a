// parallel.hpp — Thread budget shared by block-parallel assembly

#pragma once

#include <cstdlib>
#include <thread>

namespace ifmps::detail {

// IFMPS_THREADS caps worker threads; unset means hardware concurrency.
inline int thread_budget() {
    if (const char* env = std::getenv("IFMPS_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

} // namespace ifmps::detail
