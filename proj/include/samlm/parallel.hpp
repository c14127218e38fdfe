#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace samlm {

// Worker count from SAMLM_THREADS; 1 when unset or invalid.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("SAMLM_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  return 1;
}

// Splits [0, n) into `shards` contiguous ranges and runs fn(begin, end, shard)
// on each, one thread per shard. The first exception is rethrown.
template <typename Fn>
void parallel_shards(std::size_t n, std::size_t shards, Fn&& fn) {
  shards = std::max<std::size_t>(1, std::min(shards, n));
  if (shards == 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::exception_ptr> errors(shards);
  std::vector<std::thread> workers;
  workers.reserve(shards);
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = n * s / shards;
    const std::size_t end = n * (s + 1) / shards;
    workers.emplace_back([&, begin, end, s] {
      try {
        fn(begin, end, s);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace samlm
