#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "picar/report.hpp"

namespace picar {

namespace {

constexpr const char* kUnavailable = "frequency monitoring unavailable";

std::optional<double> read_frequency(const std::filesystem::path& path) {
  std::ifstream in(path);
  double v = 0.0;
  if (!(in >> v)) return std::nullopt;
  return v;
}

}  // namespace

bool throttling_detected(const std::vector<std::vector<double>>& samples_khz) {
  double peak = 0.0;
  for (const auto& core : samples_khz)
    for (double v : core) peak = std::max(peak, v);
  if (peak <= 0.0) return false;
  for (const auto& core : samples_khz)
    for (double v : core)
      if (v < 0.9 * peak) return true;
  return false;
}

std::vector<std::filesystem::path> default_frequency_paths() {
  std::vector<std::filesystem::path> paths;
  std::error_code ec;
  const std::filesystem::path root = "/sys/devices/system/cpu";
  for (unsigned cpu = 0;; ++cpu) {
    const auto p = root / ("cpu" + std::to_string(cpu)) / "cpufreq" / "scaling_cur_freq";
    if (!std::filesystem::exists(p, ec)) break;
    paths.push_back(p);
  }
  return paths;
}

struct FrequencyMonitor::State {
  FrequencyTrace trace;
  std::chrono::milliseconds interval;
  std::atomic<bool> stop{false};
  std::thread thread;
  bool joined = false;
};

FrequencyMonitor::FrequencyMonitor(std::vector<std::filesystem::path> paths,
                                   std::chrono::milliseconds interval)
    : state_(std::make_unique<State>()) {
  state_->interval = interval;
  state_->trace.paths = std::move(paths);
  state_->trace.samples_khz.resize(state_->trace.paths.size());
  bool readable = !state_->trace.paths.empty();
  for (const auto& p : state_->trace.paths) readable &= read_frequency(p).has_value();
  state_->trace.available = readable;
  if (!readable) {
    state_->trace.note = kUnavailable;
    return;
  }
  state_->thread = std::thread([s = state_.get()] {
    for (;;) {
      for (std::size_t i = 0; i < s->trace.paths.size(); ++i) {
        if (auto v = read_frequency(s->trace.paths[i])) s->trace.samples_khz[i].push_back(*v);
      }
      if (s->stop.load(std::memory_order_relaxed)) return;
      std::this_thread::sleep_for(s->interval);
    }
  });
}

FrequencyMonitor::~FrequencyMonitor() {
  if (state_ && state_->thread.joinable()) {
    state_->stop = true;
    state_->thread.join();
  }
}

bool FrequencyMonitor::available() const noexcept { return state_->trace.available; }

FrequencyTrace FrequencyMonitor::stop() {
  if (state_->thread.joinable()) {
    state_->stop = true;
    state_->thread.join();
  }
  state_->trace.throttled = throttling_detected(state_->trace.samples_khz);
  return state_->trace;
}

FrequencyTrace sample_cpu_frequency(const std::vector<std::filesystem::path>& paths,
                                    std::chrono::milliseconds interval,
                                    std::chrono::milliseconds duration) {
  FrequencyMonitor monitor(paths, interval);
  if (monitor.available()) std::this_thread::sleep_for(duration);
  return monitor.stop();
}

}  // namespace picar
