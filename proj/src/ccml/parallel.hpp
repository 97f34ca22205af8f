#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ccml {

// Runs fn(i) for i in [0, count). Results must be written by index so the
// outcome does not depend on scheduling. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t count, int jobs, F&& fn) {
  if (jobs <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(jobs)));
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace ccml
