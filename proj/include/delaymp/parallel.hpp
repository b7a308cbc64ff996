#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "core.hpp"

namespace delaymp {

/// Static block partition of [0, count) over `threads` workers.  Each item is
/// processed exactly once and workers never share output slots, so results are
/// identical for any thread count.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    require(count >= 0, ErrorKind::parameter, "parallel_for: negative count");
    require(threads >= 1, ErrorKind::parameter, "parallel_for: threads must be >= 1");
    if (threads == 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    threads = std::min(threads, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(threads);
    const int chunk = (count + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(count, lo + chunk);
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (int i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace delaymp
