#include "picar/worker_pool.hpp"

#include "picar/platform.hpp"

namespace picar {

WorkerPool::WorkerPool(std::size_t workers, std::vector<int> cores) {
  if (workers == 0) workers = 1;
  helpers_.reserve(workers - 1);
  for (std::size_t i = 1; i < workers; ++i) {
    helpers_.emplace_back([this, i] { helper_loop(i); });
    if (!cores.empty()) {
      affinity_honored_ &= pin_thread(helpers_.back(), cores[i % cores.size()]);
    }
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : helpers_) t.join();
}

std::pair<std::size_t, std::size_t> WorkerPool::range_for(std::size_t n, std::size_t parts,
                                                          std::size_t index) {
  const std::size_t base = n / parts, extra = n % parts;
  const std::size_t first = index * base + std::min(index, extra);
  return {first, first + base + (index < extra ? 1 : 0)};
}

void WorkerPool::parallel_for(std::size_t n,
                              const std::function<void(std::size_t, std::size_t)>& fn) {
  if (helpers_.empty()) {
    fn(0, n);
    return;
  }
  {
    std::lock_guard lock(mutex_);
    job_ = &fn;
    job_n_ = n;
    pending_ = helpers_.size();
    ++generation_;
  }
  start_cv_.notify_all();
  auto [first, last] = range_for(n, size(), 0);
  if (first < last) fn(first, last);
  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  job_ = nullptr;
}

void WorkerPool::helper_loop(std::size_t index) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t, std::size_t)>* job;
    std::size_t n;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
      if (stopping_) return;
      seen = generation_;
      job = job_;
      n = job_n_;
    }
    auto [first, last] = range_for(n, size(), index);
    if (first < last) (*job)(first, last);
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

}  // namespace picar
