#include "picar/report.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "picar/platform.hpp"

namespace picar {

double nearest_rank(std::span<const double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  // The guard keeps p * N that is integral on paper (0.99 * 100) from
  // rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

Stats aggregate(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("cannot aggregate an empty sample");
  Stats s;
  s.count = samples.size();
  double sum = 0.0;
  s.min = samples[0];
  s.max = samples[0];
  for (double v : samples) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  s.p99 = sorted[(99 * s.count + 99) / 100 - 1];  // ceil(0.99 N), in integers
  return s;
}

namespace {

std::string current_scheduler() {
  int policy = SCHED_OTHER;
  sched_param param{};
  pthread_getschedparam(pthread_self(), &policy, &param);
  switch (policy) {
    case SCHED_FIFO:
      return "SCHED_FIFO";
    case SCHED_RR:
      return "SCHED_RR";
    default:
      return "SCHED_OTHER";
  }
}

}  // namespace

EnvironmentSnapshot capture_environment() {
  EnvironmentSnapshot env;
  env.cores = available_cores();
  env.scheduler = current_scheduler();
  return env;
}

TimingReport build_report(std::span<const TimingSample> samples) {
  if (samples.empty()) throw std::invalid_argument("cannot report on zero samples");
  std::vector<double> capture, pre, infer, act, total;
  TimingReport r;
  for (const auto& s : samples) {
    capture.push_back(s.capture_ms);
    pre.push_back(s.preprocess_ms);
    infer.push_back(s.infer_ms);
    act.push_back(s.actuate_ms);
    total.push_back(s.total_ms);
    r.deadline_misses += s.missed ? 1 : 0;
  }
  r.capture = aggregate(capture);
  r.preprocess = aggregate(pre);
  r.infer = aggregate(infer);
  r.actuate = aggregate(act);
  r.total = aggregate(total);
  r.sample_count = samples.size();
  r.environment = capture_environment();
  return r;
}

}  // namespace picar
