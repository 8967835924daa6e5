#include "threads.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace lab {

int worker_count() {
  const char* env = std::getenv("LAB_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  int workers = worker_count();
  if (workers == 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto run = [&]() {
    for (;;) {
      std::int64_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace lab
