#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "bpjd/types.hpp"

namespace bpjd {

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 = hardware
/// concurrency). Work is handed out dynamically, so callers must write results
/// into per-index slots and reduce afterwards in index order. The exception of
/// the lowest failing index is rethrown, which keeps error reporting
/// independent of scheduling.
template <typename Body>
void parallel_for(Index count, int threads, Body&& body) {
  if (count <= 0) return;
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<Index> next{0};
  std::mutex error_mutex;
  Index error_index = count;
  std::exception_ptr error;

  auto worker = [&] {
    for (Index i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace bpjd
