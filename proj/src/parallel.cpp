#include "tritok/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "tritok/error.hpp"

namespace tritok {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kConfig:
            return "config";
        case ErrorKind::kShape:
            return "shape";
        case ErrorKind::kOutOfRange:
            return "out_of_range";
        case ErrorKind::kIo:
            return "io";
        case ErrorKind::kNumeric:
            return "numeric";
        case ErrorKind::kGradCheck:
            return "grad_check";
    }
    return "unknown";
}

std::size_t thread_count() {
    if (const char* env = std::getenv("TRITOK_NUM_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min(thread_count(), n);
    if (workers == 1) {
        fn(0, 0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(w, begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace tritok
