#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "picar/pipeline.hpp"

namespace picar {

/// mean (input-order sum / N), max, nearest-rank p99 (the ceil(0.99 N)-th
/// order statistic) and sample standard deviation (N - 1; 0 for N = 1).
struct Stats {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double p99 = 0.0;
  double stdev = 0.0;
  friend bool operator==(const Stats&, const Stats&) = default;
};

/// Throws std::invalid_argument on empty input.
Stats aggregate(std::span<const double> samples);

/// Nearest-rank percentile, p in (0, 1].
double nearest_rank(std::span<const double> samples, double p);

struct FrequencyTrace {
  bool available = false;
  std::string note;  ///< "frequency monitoring unavailable" when disabled
  std::vector<std::filesystem::path> paths;
  std::vector<std::vector<double>> samples_khz;  ///< per path
  bool throttled = false;
};

/// True if any sample is below 90% of the largest sample observed.
bool throttling_detected(const std::vector<std::vector<double>>& samples_khz);

/// Reads each path (a single integer, e.g. scaling_cur_freq in kHz) every
/// `interval` for `duration`. Unreadable paths disable monitoring; never throws.
FrequencyTrace sample_cpu_frequency(const std::vector<std::filesystem::path>& paths,
                                    std::chrono::milliseconds interval,
                                    std::chrono::milliseconds duration);

/// Per-core cpufreq files present on this host.
std::vector<std::filesystem::path> default_frequency_paths();

/// Samples on a side thread while an experiment runs.
class FrequencyMonitor {
 public:
  FrequencyMonitor(std::vector<std::filesystem::path> paths, std::chrono::milliseconds interval);
  ~FrequencyMonitor();
  FrequencyMonitor(const FrequencyMonitor&) = delete;
  FrequencyMonitor& operator=(const FrequencyMonitor&) = delete;

  bool available() const noexcept;

  /// Joins the sampler and returns what it collected.
  FrequencyTrace stop();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct EnvironmentSnapshot {
  unsigned cores = 0;
  std::string scheduler = "SCHED_OTHER";
  bool affinity_honored = true;
  FrequencyTrace frequency;
};

EnvironmentSnapshot capture_environment();

struct TimingReport {
  Stats capture;
  Stats preprocess;
  Stats infer;
  Stats actuate;
  Stats total;
  std::size_t sample_count = 0;
  std::size_t deadline_misses = 0;
  bool complete = true;
  EnvironmentSnapshot environment;
};

TimingReport build_report(std::span<const TimingSample> samples);

// CSV ---------------------------------------------------------------------------

/// Shortest text that parses back to the identical double.
std::string format_double(double v);
double parse_double(const std::string& text);

/// `iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed`
void write_timing_csv(std::span<const TimingSample> samples, const std::filesystem::path& path);
std::vector<TimingSample> read_timing_csv(const std::filesystem::path& path);

struct SummaryRow {
  std::string experiment;
  std::string metric;
  std::string stage;
  double value = 0.0;
  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

/// `experiment,metric,stage,value`
void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// mean/max/p99/stdev rows for every stage of `report`.
std::vector<SummaryRow> summary_rows(const std::string& experiment, const TimingReport& report);

/// Reassembles per-stage Stats from summary rows written by summary_rows().
Stats stats_from_rows(std::span<const SummaryRow> rows, const std::string& experiment,
                      const std::string& stage);

/// `step,loss`
void write_loss_csv(std::span<const double> losses, const std::filesystem::path& path);

}  // namespace picar
