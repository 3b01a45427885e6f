#ifndef SYSRISK_PARALLEL_HPP
#define SYSRISK_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sysrisk {

/// Worker count: SYSRISK_THREADS caps it (0 or unset = hardware concurrency).
inline unsigned workerCount() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SYSRISK_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap > 0) hw = static_cast<unsigned>(cap);
    } catch (const std::exception&) {
      // malformed value: keep the default
    }
  }
  return hw;
}

/// Run body(i) for i in [0, count) on up to workerCount() threads.
/// Each index is processed exactly once; the first exception is rethrown.
template <typename Body>
void parallelFor(std::size_t count, Body&& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(workerCount(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failureMutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          const std::lock_guard lock(failureMutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sysrisk

#endif  // SYSRISK_PARALLEL_HPP
