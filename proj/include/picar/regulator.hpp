#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "picar/contention.hpp"

namespace picar {

class RegulatorConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// MB here is 10^6 bytes.
struct RegulatorBudget {
  double budget_mbps = 100.0;
  double period_ms = 1.0;
};

/// floor(budget_mbps * 10^6 * period_ms / 1000).
std::uint64_t budget_bytes_per_period(double budget_mbps, double period_ms);

/// Per-task software regulator. Periods are aligned to a shared epoch;
/// once a period's byte count reaches the budget the caller sleeps until
/// the next boundary.
class BandwidthRegulator : public ChunkObserver {
 public:
  using Clock = std::chrono::steady_clock;

  BandwidthRegulator(const RegulatorBudget& budget, std::size_t chunk_bytes,
                     Clock::time_point epoch = Clock::now());

  void on_chunk(std::size_t bytes) override;

  std::uint64_t budget_bytes() const noexcept { return budget_bytes_; }
  std::size_t throttle_count() const noexcept { return throttles_; }
  /// Bytes counted in every period that saw traffic, in order.
  const std::vector<std::uint64_t>& bytes_per_period() const noexcept { return history_; }

  /// Closes the current period's record.
  void finish();

 private:
  std::int64_t period_index(Clock::time_point t) const;

  Clock::time_point epoch_;
  Clock::duration period_;
  std::uint64_t budget_bytes_;
  std::int64_t current_period_;
  std::uint64_t used_ = 0;
  std::size_t throttles_ = 0;
  std::vector<std::uint64_t> history_;
};

struct RegulatedResult {
  BwResult bandwidth;
  std::uint64_t budget_bytes = 0;
  std::size_t throttles = 0;
  std::vector<std::uint64_t> bytes_per_period;
};

/// Runs `task` under `budget`. Throws RegulatorConfigError if one chunk is
/// larger than the per-period budget.
RegulatedResult regulated_run(const BandwidthTask& task, const RegulatorBudget& budget);

}  // namespace picar
