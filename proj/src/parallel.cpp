#include "qss/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qss {

void parallel_blocks(std::size_t blocks, std::size_t threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) body(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t b = next++; b < blocks; b = next++) {
            try {
                body(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(threads, blocks);
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace qss
