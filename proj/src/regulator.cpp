#include "picar/regulator.hpp"

#include <cmath>
#include <string>

#include "picar/platform.hpp"

namespace picar {

std::uint64_t budget_bytes_per_period(double budget_mbps, double period_ms) {
  if (!(budget_mbps > 0.0) || !(period_ms > 0.0)) {
    throw RegulatorConfigError("budget and period must be positive");
  }
  // MB/s * 10^6 B/MB * ms / 1000 ms/s
  return static_cast<std::uint64_t>(std::floor(budget_mbps * period_ms * 1000.0));
}

BandwidthRegulator::BandwidthRegulator(const RegulatorBudget& budget, std::size_t chunk_bytes,
                                       Clock::time_point epoch)
    : epoch_(epoch),
      period_(std::chrono::duration_cast<Clock::duration>(
          std::chrono::duration<double, std::milli>(budget.period_ms))),
      budget_bytes_(budget_bytes_per_period(budget.budget_mbps, budget.period_ms)) {
  if (chunk_bytes > budget_bytes_) {
    throw RegulatorConfigError("chunk of " + std::to_string(chunk_bytes) +
                               " bytes exceeds the per-period budget of " +
                               std::to_string(budget_bytes_) + " bytes");
  }
  if (period_.count() <= 0) throw RegulatorConfigError("regulation period too small");
  current_period_ = period_index(Clock::now());
}

std::int64_t BandwidthRegulator::period_index(Clock::time_point t) const {
  return (t - epoch_) / period_;
}

void BandwidthRegulator::on_chunk(std::size_t bytes) {
  const std::int64_t p = period_index(Clock::now());
  if (p != current_period_) {
    if (used_ > 0) history_.push_back(used_);
    current_period_ = p;
    used_ = 0;
  }
  used_ += bytes;
  if (used_ >= budget_bytes_) {
    ++throttles_;
    history_.push_back(used_);
    used_ = 0;
    sleep_until(epoch_ + (p + 1) * period_);
    current_period_ = std::max(p + 1, period_index(Clock::now()));
  }
}

void BandwidthRegulator::finish() {
  if (used_ > 0) history_.push_back(used_);
  used_ = 0;
}

RegulatedResult regulated_run(const BandwidthTask& task, const RegulatorBudget& budget) {
  const std::uint64_t per_period = budget_bytes_per_period(budget.budget_mbps, budget.period_ms);
  if (task.chunk_bytes > per_period) {
    throw RegulatorConfigError("chunk of " + std::to_string(task.chunk_bytes) +
                               " bytes exceeds the per-period budget of " +
                               std::to_string(per_period) + " bytes");
  }
  set_timer_slack_ns(1);
  const bool pinned = task.core ? pin_current_thread(*task.core) : false;
  BandwidthRunner runner(task);
  // Epoch starts after the array is faulted in.
  BandwidthRegulator regulator(budget, task.chunk_bytes);
  RegulatedResult r;
  r.bandwidth = runner.run(&regulator);
  r.bandwidth.pinned = pinned;
  regulator.finish();
  r.budget_bytes = regulator.budget_bytes();
  r.throttles = regulator.throttle_count();
  r.bytes_per_period = regulator.bytes_per_period();
  return r;
}

}  // namespace picar
