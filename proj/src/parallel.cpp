#include "sace/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sace {

int default_workers() {
  if (const char* env = std::getenv("SACE_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn, int workers) {
  if (n == 0) return;
  if (workers <= 0) workers = default_workers();
  size_t nw = std::min<size_t>(static_cast<size_t>(workers), n);

  std::atomic<size_t> next{0};
  std::mutex mu;
  size_t failed_at = n;
  std::exception_ptr err;

  auto body = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          err = std::current_exception();
        }
      }
    }
  };

  if (nw == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nw - 1);
    for (size_t t = 0; t + 1 < nw; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace sace
