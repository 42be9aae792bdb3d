#pragma once

#include <gradflow/types.hpp>

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gradflow {

/// Fixed work-block width. The block partition never depends on the thread
/// count, so block-wise reductions give identical results at any --threads.
inline constexpr Index kParallelBlock = 32;

inline int resolveThreads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline Index numBlocks(Index n) {
  return (n + kParallelBlock - 1) / kParallelBlock;
}

/// Runs fn(block_index, lo, hi) over the fixed partition of [0, n).
/// Blocks are claimed from an atomic counter; each block's work must be
/// independent. Exceptions are captured and rethrown on the caller thread.
inline void parallelForBlocks(
    Index n, int threads,
    const std::function<void(Index, Index, Index)>& fn) {
  const Index nblocks = numBlocks(n);
  if (nblocks == 0) return;
  threads = resolveThreads(threads);
  if (threads <= 1 || nblocks == 1) {
    for (Index b = 0; b < nblocks; ++b)
      fn(b, b * kParallelBlock, std::min(n, (b + 1) * kParallelBlock));
    return;
  }

  std::atomic<Index> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const Index b = next.fetch_add(1);
      if (b >= nblocks || failed.load()) return;
      try {
        fn(b, b * kParallelBlock, std::min(n, (b + 1) * kParallelBlock));
      } catch (...) {
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
        failed.store(true);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const int nworkers = static_cast<int>(std::min<Index>(threads, nblocks));
  pool.reserve(nworkers);
  for (int t = 0; t < nworkers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Per-item parallel loop over [0, n) with the same fixed partition.
inline void parallelForEach(Index n, int threads,
                            const std::function<void(Index)>& fn) {
  parallelForBlocks(n, threads, [&](Index, Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) fn(i);
  });
}

}  // namespace gradflow
