#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "picar/report.hpp"

using namespace picar;
namespace fs = std::filesystem;

TEST(Aggregate, HandCase) {
  const std::vector<double> v{1, 2, 3, 4};
  const Stats s = aggregate(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.p99, 4.0);
  EXPECT_NEAR(s.stdev, 1.2909944, 1e-6);
}

TEST(Aggregate, NearestRankOnHundred) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 100 - i;  // descending on purpose
  EXPECT_DOUBLE_EQ(aggregate(v).p99, 99.0);
  EXPECT_DOUBLE_EQ(nearest_rank(v, 0.5), 50.0);
  EXPECT_DOUBLE_EQ(nearest_rank(v, 1.0), 100.0);
}

TEST(Aggregate, SingleSample) {
  const Stats s = aggregate(std::vector<double>{7.25});
  EXPECT_EQ(s.mean, 7.25);
  EXPECT_EQ(s.p99, 7.25);
  EXPECT_EQ(s.stdev, 0.0);
  EXPECT_THROW(aggregate(std::vector<double>{}), std::invalid_argument);
}

TEST(Aggregate, MatchesBruteForceExactly) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 2000);
  std::lognormal_distribution<double> val(1.0, 0.7);
  for (int n = 0; n < 1000; ++n) {
    std::vector<double> v(len(rng));
    for (double& x : v) x = val(rng);
    const Stats s = aggregate(v);
    const auto want = oracle::summarize(v);
    ASSERT_EQ(s.mean, want.mean);
    ASSERT_EQ(s.min, want.min);
    ASSERT_EQ(s.max, want.max);
    ASSERT_EQ(s.p99, want.p99) << "N=" << v.size();
    ASSERT_EQ(s.stdev, want.stdev);
  }
}

TEST(Report, DeadlineMissesCounted) {
  std::vector<TimingSample> samples(5);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].infer_ms = double(i);
    samples[i].total_ms = double(i) + 1;
    samples[i].missed = i >= 3;
  }
  const auto r = build_report(samples);
  EXPECT_EQ(r.deadline_misses, 2u);
  EXPECT_EQ(r.sample_count, 5u);
  EXPECT_DOUBLE_EQ(r.infer.mean, 2.0);
  EXPECT_GE(r.environment.cores, 1u);
}

TEST(Csv, DoublesRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = d(rng);
    ASSERT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
}

TEST(Csv, TimingRoundTrip) {
  const auto p = fs::temp_directory_path() / "picar_timing.csv";
  std::vector<TimingSample> samples(3);
  for (std::size_t i = 0; i < 3; ++i) {
    samples[i].iter = i;
    samples[i].capture_ms = 0.1 * i;
    samples[i].preprocess_ms = 1.0 / 3.0;
    samples[i].infer_ms = 22.86 + i;
    samples[i].actuate_ms = 1e-7;
    samples[i].total_ms = 40.0 / 7.0;
    samples[i].missed = i == 2;
  }
  write_timing_csv(samples, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed");
  const auto back = read_timing_csv(p);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].iter, samples[i].iter);
    EXPECT_EQ(back[i].infer_ms, samples[i].infer_ms);
    EXPECT_EQ(back[i].preprocess_ms, samples[i].preprocess_ms);
    EXPECT_EQ(back[i].missed, samples[i].missed);
  }
}

TEST(Csv, SummaryRoundTripAndStats) {
  std::vector<TimingSample> samples(10);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].infer_ms = 1.0 / double(i + 1);
    samples[i].total_ms = 2.0 / double(i + 1);
  }
  const auto report = build_report(samples);
  const auto rows = summary_rows("baseline", report);
  const auto p = fs::temp_directory_path() / "picar_summary.csv";
  write_summary_csv(rows, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "experiment,metric,stage,value");
  const auto back = read_summary_csv(p);
  EXPECT_EQ(back, rows);
  EXPECT_EQ(stats_from_rows(back, "baseline", "infer"), report.infer);
  EXPECT_THROW(stats_from_rows(back, "nope", "infer"), std::invalid_argument);
}

TEST(Csv, WrongHeaderRejected) {
  const auto p = fs::temp_directory_path() / "picar_bad.csv";
  std::ofstream(p) << "a,b,c\n1,2,3\n";
  EXPECT_THROW(read_summary_csv(p), std::runtime_error);
  EXPECT_THROW(read_timing_csv(p), std::runtime_error);
}

TEST(Csv, LossSchema) {
  const auto p = fs::temp_directory_path() / "picar_loss.csv";
  write_loss_csv(std::vector<double>{3.5, 0.25}, p);
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "step,loss\n0,3.5\n1,0.25\n");
}

TEST(Frequency, ThrottlingFlag) {
  EXPECT_FALSE(throttling_detected({{1200000, 1200000}, {1150000}}));
  EXPECT_TRUE(throttling_detected({{1200000, 1000000}}));
  EXPECT_FALSE(throttling_detected({}));
}

TEST(Frequency, UnreadablePathsDisableMonitoring) {
  const auto t = sample_cpu_frequency({"/nonexistent/scaling_cur_freq"},
                                      std::chrono::milliseconds(1), std::chrono::milliseconds(5));
  EXPECT_FALSE(t.available);
  EXPECT_EQ(t.note, "frequency monitoring unavailable");
  FrequencyMonitor m({}, std::chrono::milliseconds(1));
  EXPECT_FALSE(m.available());
  EXPECT_FALSE(m.stop().available);
}

TEST(Frequency, ReadsFakeSysfsFiles) {
  const auto dir = fs::temp_directory_path() / "picar_freq";
  fs::create_directories(dir);
  std::ofstream(dir / "cpu0") << "1200000\n";
  std::ofstream(dir / "cpu1") << "600000\n";
  const auto t = sample_cpu_frequency({dir / "cpu0", dir / "cpu1"}, std::chrono::milliseconds(2),
                                      std::chrono::milliseconds(10));
  ASSERT_TRUE(t.available);
  ASSERT_EQ(t.samples_khz.size(), 2u);
  EXPECT_FALSE(t.samples_khz[0].empty());
  EXPECT_EQ(t.samples_khz[1].front(), 600000.0);
  EXPECT_TRUE(t.throttled);
}
