#include <gtest/gtest.h>

#include <atomic>

#include "picar/worker_pool.hpp"

using picar::WorkerPool;

TEST(WorkerPool, RangesCoverExactlyOnce) {
  for (std::size_t n : {0u, 1u, 7u, 64u, 1001u}) {
    for (std::size_t parts : {1u, 2u, 3u, 4u, 8u}) {
      std::size_t expect_first = 0;
      for (std::size_t i = 0; i < parts; ++i) {
        const auto [first, last] = WorkerPool::range_for(n, parts, i);
        EXPECT_EQ(first, expect_first);
        EXPECT_LE(first, last);
        expect_first = last;
      }
      EXPECT_EQ(expect_first, n);
    }
  }
}

TEST(WorkerPool, EveryIndexVisitedOnce) {
  for (std::size_t workers : {1u, 2u, 4u}) {
    WorkerPool pool(workers);
    EXPECT_EQ(pool.size(), workers);
    std::vector<std::atomic<int>> hits(500);
    for (int round = 0; round < 20; ++round) {
      pool.parallel_for(hits.size(), [&](std::size_t first, std::size_t last) {
        for (std::size_t i = first; i < last; ++i) hits[i].fetch_add(1);
      });
    }
    for (auto& h : hits) EXPECT_EQ(h.load(), 20);
  }
}

TEST(WorkerPool, UnknownCoreNotHonored) {
  WorkerPool pool(2, {100000});
  EXPECT_FALSE(pool.affinity_honored());
  int total = 0;
  pool.parallel_for(1, [&](std::size_t f, std::size_t l) { total += static_cast<int>(l - f); });
  EXPECT_EQ(total, 1);
}
