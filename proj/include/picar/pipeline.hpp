#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "picar/davenet.hpp"
#include "picar/image.hpp"
#include "picar/tensor.hpp"

namespace picar {

/// Nearest-neighbour resize to 200x66, RGB kept, bytes scaled by 1/255.
/// Throws ImageError for anything but 3-channel input.
Tensor preprocess(const RawImage& image);

/// Closest of {-30, 0, +30}; exact ties at +/-15 go to the center.
int discretize_steering(float angle_deg);

struct PwmTable {
  double left = 5.0;  ///< duty cycle percent at -30 degrees
  double center = 7.5;
  double right = 10.0;
};

struct DutyRecord {
  int angle_deg = 0;
  double duty = 0.0;
};

/// Throws std::invalid_argument unless angle is one of {-30, 0, 30}.
DutyRecord angle_to_pwm(int angle_deg, const PwmTable& table = {});

// Frame sources ---------------------------------------------------------------

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next raw image, or nullopt once exhausted.
  virtual std::optional<RawImage> next() = 0;
};

/// Every .ppm/.raw file in a directory, in lexicographic order.
class DirectoryFrameSource : public FrameSource {
 public:
  explicit DirectoryFrameSource(const std::filesystem::path& dir);
  std::optional<RawImage> next() override;
  std::size_t size() const noexcept { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
};

/// Pseudo-random images generated on request.
class SyntheticFrameSource : public FrameSource {
 public:
  SyntheticFrameSource(std::size_t width, std::size_t height, std::size_t count,
                       std::uint64_t seed);
  std::optional<RawImage> next() override;

 private:
  std::size_t width_, height_, remaining_;
  std::mt19937_64 rng_;
};

/// Stands in for a camera: replays pre-recorded frames in a cycle, up to
/// `count` frames (0 = unbounded).
class DeviceStubSource : public FrameSource {
 public:
  DeviceStubSource(std::vector<RawImage> frames, std::size_t count = 0);
  std::optional<RawImage> next() override;

 private:
  std::vector<RawImage> frames_;
  std::size_t count_;
  std::size_t served_ = 0;
};

// Actuator sinks --------------------------------------------------------------

class ActuatorSink {
 public:
  virtual ~ActuatorSink() = default;
  /// Timestamps must not decrease; std::invalid_argument otherwise.
  virtual void record(std::int64_t timestamp_us, const DutyRecord& duty) = 0;
};

class NullSink : public ActuatorSink {
 public:
  void record(std::int64_t timestamp_us, const DutyRecord& duty) override;

 private:
  std::int64_t last_us_ = std::numeric_limits<std::int64_t>::min();
};

/// Appends `timestamp_us,angle_deg,pwm_duty` rows.
class LogFileSink : public ActuatorSink {
 public:
  explicit LogFileSink(const std::filesystem::path& path);
  void record(std::int64_t timestamp_us, const DutyRecord& duty) override;

 private:
  std::ofstream out_;
  std::int64_t last_us_ = std::numeric_limits<std::int64_t>::min();
};

// Control loop ----------------------------------------------------------------

/// Burns CPU for a fixed time and steers straight; a stand-in for inference.
class BusyWaitModel : public SteeringModel {
 public:
  explicit BusyWaitModel(std::chrono::nanoseconds duration) : duration_(duration) {}
  float predict(const Tensor& frame) override;

 private:
  std::chrono::nanoseconds duration_;
};

struct LoopConfig {
  double period_ms = 33.3;
  std::size_t iterations = 1000;  ///< samples kept after warmup
  std::size_t warmup = 1;         ///< leading iterations discarded
  std::size_t worker_count = 1;
  bool realtime = true;  ///< request SCHED_FIFO if permitted
  int realtime_priority = 80;
  /// Back-to-back iterations with no sleeping (contention experiments).
  bool free_running = false;
  PwmTable pwm;
  /// Invoked once, right before the first kept (post-warmup) iteration.
  std::function<void()> on_timed_start;
};

struct TimingSample {
  std::size_t iter = 0;
  double release_ms = 0.0;  ///< scheduled release, relative to the first release
  double start_ms = 0.0;    ///< actual start, same origin
  double capture_ms = 0.0;
  double preprocess_ms = 0.0;
  double infer_ms = 0.0;
  double actuate_ms = 0.0;
  double total_ms = 0.0;
  bool missed = false;  ///< finished after release + period
};

struct LoopResult {
  std::vector<TimingSample> samples;
  bool complete = true;  ///< false if the source ran dry
  bool realtime_applied = false;
  std::size_t warmup_discarded = 0;
  std::vector<float> angles;  ///< raw network output per kept sample
};

/// Releases iterations at absolute period boundaries. Each iteration runs
/// capture, preprocess, infer and discretize+actuate, then sleeps until the
/// next boundary; an overrun skips to the first boundary not yet passed.
LoopResult run_control_loop(const LoopConfig& cfg, FrameSource& source, SteeringModel& model,
                            ActuatorSink& sink);

}  // namespace picar
