#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "picar/davenet.hpp"
#include "picar/report.hpp"

namespace picar {

class ContentionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultLlcBytes = 512 * 1024;

enum class BwMode { read, write };

std::string to_string(BwMode mode);
BwMode parse_bw_mode(const std::string& text);

/// Sequential sweep over a large array, in the style of a BwRead/BwWrite
/// co-runner. Stops after `passes` full passes, after `duration`, or when
/// `stop` becomes true, whichever comes first (zero means no bound).
struct BandwidthTask {
  BwMode mode = BwMode::read;
  std::size_t array_bytes = 4 * kDefaultLlcBytes;
  std::optional<int> core;
  std::size_t passes = 0;
  std::chrono::nanoseconds duration{0};
  const std::atomic<bool>* stop = nullptr;
  std::size_t chunk_bytes = 4096;  ///< accounting granularity
};

struct BwResult {
  std::uint64_t bytes = 0;  ///< bytes actually traversed
  double seconds = 0.0;
  double mbps = 0.0;  ///< 10^6 bytes per second
  bool pinned = false;
};

/// Receives the byte count of every processed chunk; may block to throttle.
class ChunkObserver {
 public:
  virtual ~ChunkObserver() = default;
  virtual void on_chunk(std::size_t bytes) = 0;
};

/// Allocates and faults in the array at construction so that run() times
/// only the sweep itself.
class BandwidthRunner {
 public:
  explicit BandwidthRunner(const BandwidthTask& task);

  BwResult run(ChunkObserver* observer = nullptr);

  /// Read-mode checksum, kept observable so the loads are not elided.
  std::uint64_t checksum() const noexcept { return checksum_; }

 private:
  BandwidthTask task_;
  std::vector<std::uint64_t> array_;
  std::uint64_t checksum_ = 0;
};

/// Pins (if asked), faults in, runs, reports. Throws ContentionError on
/// allocation failure.
BwResult bw_run(const BandwidthTask& task);

// Plans --------------------------------------------------------------------

enum class TaskKind { cnn, bandwidth };

struct TaskSpec {
  TaskKind kind = TaskKind::cnn;
  std::string name;
  std::vector<int> cores;
  std::size_t worker_count = 1;  ///< cnn only
  BwMode mode = BwMode::read;    ///< bandwidth only
  double array_mib = 0.0;        ///< bandwidth only; 0 means 4x LLC
  std::optional<double> budget_mbps;  ///< bandwidth only; regulated when set
};

struct ContentionPlan {
  std::string name;
  std::vector<TaskSpec> tasks;
  /// Every task owns its cores exclusively; violations are rejected.
  bool dedicated = true;
  std::size_t iterations = 1000;
  std::size_t warmup = 1;
  std::size_t llc_bytes = kDefaultLlcBytes;
  double regulator_period_ms = 1.0;
  std::uint64_t seed = 1;
  std::filesystem::path weights;  ///< empty: Xavier weights from `seed`
};

/// "1Nx1C", "4Nx1C", "1Nx2C", "2Nx2C": N models each using C cores,
/// assigned consecutive cores from 0.
ContentionPlan plan_from_shorthand(const std::string& shorthand);

/// Adds `count` co-runners on the cores after those already used.
void add_corunners(ContentionPlan& plan, BwMode mode, std::size_t count,
                   std::optional<double> budget_mbps = std::nullopt);

/// Total distinct cores the plan asks for.
std::size_t cores_required(const ContentionPlan& plan);

/// JSON plan file:
/// {"name": ..., "dedicated": true, "iterations": 1000, "llc_kib": 512,
///  "tasks": [{"kind": "cnn"|"bw", "cores": [0], "worker_count": 1,
///             "mode": "read"|"write", "array_mib": 2, "budget_mbps": 300}]}
ContentionPlan load_plan(const std::filesystem::path& path);
ContentionPlan parse_plan(const std::string& json_text);

struct CnnTaskResult {
  std::string name;
  std::vector<int> cores;
  TimingReport report;
  std::vector<TimingSample> samples;
};

struct CorunnerResult {
  std::string name;
  BwMode mode = BwMode::read;
  std::optional<double> budget_mbps;
  BwResult bandwidth;
  std::int64_t first_byte_ns = 0;  ///< steady clock, when counting began
};

struct PlanResult {
  std::string plan;
  std::vector<CnnTaskResult> cnn;
  std::vector<CorunnerResult> corunners;
  bool affinity_honored = true;
  std::vector<std::string> warnings;
  std::int64_t main_start_ns = 0;  ///< steady clock, first timed CNN iteration

  double mean_infer_ms() const;  ///< over the first CNN task
};

/// Builds every task, releases them together and measures until the CNN
/// tasks finish their iterations; co-runners are then stopped.
PlanResult run_plan(const ContentionPlan& plan);

/// `plan,task,metric,value`
void write_plan_csv(const std::vector<PlanResult>& results, const std::filesystem::path& path);

}  // namespace picar
