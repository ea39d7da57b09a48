#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace picar {

/// Fixed set of threads that execute one statically partitioned job at a
/// time. The calling thread acts as worker 0, so a pool of size 1 spawns no
/// threads at all.
class WorkerPool {
 public:
  /// `cores`, when non-empty, pins helper worker i to cores[i % size].
  explicit WorkerPool(std::size_t workers, std::vector<int> cores = {});
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return helpers_.size() + 1; }

  /// Splits [0, n) into size() contiguous ranges and runs fn(first, last)
  /// for each, blocking until all ranges are done. Range boundaries depend
  /// only on n and size().
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

  /// True if every requested pinning succeeded.
  bool affinity_honored() const noexcept { return affinity_honored_; }

  static std::pair<std::size_t, std::size_t> range_for(std::size_t n, std::size_t parts,
                                                       std::size_t index);

 private:
  void helper_loop(std::size_t index);

  std::vector<std::thread> helpers_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stopping_ = false;
  bool affinity_honored_ = true;
};

}  // namespace picar
