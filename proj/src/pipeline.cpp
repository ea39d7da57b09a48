#include "picar/pipeline.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "picar/platform.hpp"

namespace picar {

Tensor preprocess(const RawImage& image) {
  if (image.channels != 3) {
    throw ImageError("preprocess needs a 3-channel image, got " + std::to_string(image.channels));
  }
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.width * image.height * 3) {
    throw ImageError("preprocess: image buffer does not match its dimensions");
  }
  Tensor out({kFrameHeight, kFrameWidth, 3});
  float* dst = out.raw();
  for (std::size_t r = 0; r < kFrameHeight; ++r) {
    const std::size_t src_r = r * image.height / kFrameHeight;
    for (std::size_t c = 0; c < kFrameWidth; ++c) {
      const std::size_t src_c = c * image.width / kFrameWidth;
      const std::uint8_t* px = image.pixels.data() + (src_r * image.width + src_c) * 3;
      for (std::size_t ch = 0; ch < 3; ++ch) *dst++ = static_cast<float>(px[ch]) / 255.0f;
    }
  }
  return out;
}

int discretize_steering(float angle_deg) {
  if (angle_deg > 15.0f) return 30;
  if (angle_deg < -15.0f) return -30;
  return 0;
}

DutyRecord angle_to_pwm(int angle_deg, const PwmTable& table) {
  switch (angle_deg) {
    case -30:
      return {angle_deg, table.left};
    case 0:
      return {angle_deg, table.center};
    case 30:
      return {angle_deg, table.right};
    default:
      throw std::invalid_argument("no PWM mapping for steering angle " +
                                  std::to_string(angle_deg) + " (expected -30, 0 or 30)");
  }
}

DirectoryFrameSource::DirectoryFrameSource(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ImageError(dir.string() + " is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".raw")) files_.push_back(entry.path());
  }
  std::sort(files_.begin(), files_.end());
}

std::optional<RawImage> DirectoryFrameSource::next() {
  if (pos_ >= files_.size()) return std::nullopt;
  return load_image(files_[pos_++]);
}

SyntheticFrameSource::SyntheticFrameSource(std::size_t width, std::size_t height,
                                           std::size_t count, std::uint64_t seed)
    : width_(width), height_(height), remaining_(count), rng_(seed) {}

std::optional<RawImage> SyntheticFrameSource::next() {
  if (remaining_ == 0) return std::nullopt;
  --remaining_;
  RawImage img(width_, height_, 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 8) {
    std::uint64_t bits = rng_();
    for (std::size_t k = i; k < std::min(i + 8, img.pixels.size()); ++k, bits >>= 8) {
      img.pixels[k] = static_cast<std::uint8_t>(bits & 0xFF);
    }
  }
  return img;
}

DeviceStubSource::DeviceStubSource(std::vector<RawImage> frames, std::size_t count)
    : frames_(std::move(frames)), count_(count) {
  if (frames_.empty()) throw ImageError("device stub needs at least one recorded frame");
}

std::optional<RawImage> DeviceStubSource::next() {
  if (count_ != 0 && served_ >= count_) return std::nullopt;
  return frames_[served_++ % frames_.size()];
}

namespace {

void check_monotonic(std::int64_t& last, std::int64_t now) {
  if (now < last) {
    throw std::invalid_argument("actuator timestamps must not decrease (" + std::to_string(now) +
                                " after " + std::to_string(last) + ")");
  }
  last = now;
}

}  // namespace

void NullSink::record(std::int64_t timestamp_us, const DutyRecord&) {
  check_monotonic(last_us_, timestamp_us);
}

LogFileSink::LogFileSink(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open actuator log " + path.string());
  out_ << "timestamp_us,angle_deg,pwm_duty\n";
}

void LogFileSink::record(std::int64_t timestamp_us, const DutyRecord& duty) {
  check_monotonic(last_us_, timestamp_us);
  out_ << timestamp_us << ',' << duty.angle_deg << ',' << duty.duty << '\n';
}

float BusyWaitModel::predict(const Tensor&) {
  const auto until = std::chrono::steady_clock::now() + duration_;
  while (std::chrono::steady_clock::now() < until) {
  }
  return 0.0f;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

/// Restores the calling thread's scheduling policy on scope exit.
class RealtimeScope {
 public:
  RealtimeScope(bool want, int priority) {
    pthread_getschedparam(pthread_self(), &old_policy_, &old_param_);
    if (want) {
      applied_ = try_realtime_priority(priority);
      if (!applied_) {
        std::cerr << "warning: SCHED_FIFO unavailable (insufficient privileges); "
                     "running under the default scheduler\n";
      }
    }
  }
  ~RealtimeScope() {
    if (applied_) pthread_setschedparam(pthread_self(), old_policy_, &old_param_);
  }
  RealtimeScope(const RealtimeScope&) = delete;
  RealtimeScope& operator=(const RealtimeScope&) = delete;
  bool applied() const noexcept { return applied_; }

 private:
  int old_policy_ = SCHED_OTHER;
  sched_param old_param_{};
  bool applied_ = false;
};

}  // namespace

LoopResult run_control_loop(const LoopConfig& cfg, FrameSource& source, SteeringModel& model,
                            ActuatorSink& sink) {
  if (!(cfg.period_ms > 0.0) || !std::isfinite(cfg.period_ms)) {
    throw std::invalid_argument("control period must be positive");
  }
  // Release k sits at origin + k * period, rounded once; no accumulated error.
  auto release_at = [period_ns = cfg.period_ms * 1e6](Clock::time_point origin, std::size_t k) {
    return origin + std::chrono::nanoseconds(std::llround(static_cast<double>(k) * period_ns));
  };

  RealtimeScope rt(cfg.realtime, cfg.realtime_priority);
  LoopResult result;
  result.realtime_applied = rt.applied();
  result.samples.reserve(cfg.iterations);
  result.angles.reserve(cfg.iterations);

  const std::size_t total_iters = cfg.warmup + cfg.iterations;
  const Clock::time_point origin = Clock::now();
  std::size_t slot = 0;
  Clock::time_point release = origin;

  for (std::size_t i = 0; i < total_iters; ++i) {
    if (!cfg.free_running) sleep_until(release);
    if (i == cfg.warmup && cfg.on_timed_start) cfg.on_timed_start();
    const auto t0 = Clock::now();
    auto raw = source.next();
    if (!raw) {
      result.complete = false;
      break;
    }
    const auto t1 = Clock::now();
    const Tensor frame = preprocess(*raw);
    const auto t2 = Clock::now();
    const float angle = model.predict(frame);
    const auto t3 = Clock::now();
    const DutyRecord duty = angle_to_pwm(discretize_steering(angle), cfg.pwm);
    sink.record(std::chrono::duration_cast<std::chrono::microseconds>(t3 - origin).count(), duty);
    const auto t4 = Clock::now();

    TimingSample s;
    s.iter = i;
    s.release_ms = ms_between(origin, release);
    s.start_ms = ms_between(origin, t0);
    s.capture_ms = ms_between(t0, t1);
    s.preprocess_ms = ms_between(t1, t2);
    s.infer_ms = ms_between(t2, t3);
    s.actuate_ms = ms_between(t3, t4);
    s.total_ms = ms_between(t0, t4);
    // Deadline is the next release; free-running iterations have no release.
    s.missed = cfg.free_running ? s.total_ms > cfg.period_ms
                                : ms_between(release, t4) > cfg.period_ms;
    if (i < cfg.warmup) {
      ++result.warmup_discarded;
    } else {
      s.iter = i - cfg.warmup;
      result.samples.push_back(s);
      result.angles.push_back(angle);
    }

    release = release_at(origin, ++slot);
    if (cfg.free_running) continue;
    // Overrun: drop the passed boundaries instead of bursting to catch up.
    const auto now = Clock::now();
    while (release <= now) release = release_at(origin, ++slot);
  }
  return result;
}

}  // namespace picar
