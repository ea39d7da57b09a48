// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance                      run everything
//   acceptance --criterion timing   run one (repeatable)
//   acceptance --list

#include <bit>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kernel_checks.hpp"
#include "oracles.hpp"
#include "picar/cachemap.hpp"
#include "picar/contention.hpp"
#include "picar/davenet.hpp"
#include "picar/platform.hpp"
#include "picar/regulator.hpp"
#include "picar/report.hpp"
#include "picar/trainer.hpp"

using namespace picar;
using namespace std::chrono_literals;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

Tensor fixed_frame(std::uint64_t seed) {
  SyntheticFrameSource src(kFrameWidth, kFrameHeight, 1, seed);
  return preprocess(*src.next());
}

// ---------------------------------------------------------------------------

Verdict architecture() {
  const auto spec = build_dave2();
  const auto want = oracle::dave2_accounting();
  const auto params = count_parameters(spec);
  const auto conn = count_connections(spec);
  const bool params_ok = params == 252219 && params == want.params;
  const bool oracle_ok =
      conn.weights == want.connections && conn.with_bias == want.connections + want.bias_connections;
  const auto in_range = [](std::uint64_t v) { return v >= 26500000 && v <= 27500000; };
  const bool range_ok = in_range(conn.weights) && in_range(conn.with_bias);
  return {params_ok && oracle_ok && range_ok,
          "parameters " + std::to_string(params) + " (oracle " + std::to_string(want.params) +
              "), connections " + std::to_string(conn.weights) + " weights-only / " +
              std::to_string(conn.with_bias) + " with bias (oracle agrees: " +
              (oracle_ok ? "yes" : "no") + "), range [26.5M, 27.5M]"};
}

Verdict kernels() {
  const auto fwd = checks::forward_vs_oracle(200, 2024);
  const auto bwd = checks::backward_vs_finite_differences(60, 2025);
  const bool ok = fwd.mismatches == 0 && bwd.mismatches == 0 && bwd.worst_rel_err < 1e-4;
  std::string d = "forward: " + std::to_string(fwd.instances - fwd.mismatches) + "/" +
                  std::to_string(fwd.instances) + " conv+fc instances bit-exact vs naive loops; " +
                  "backward: max rel err " + fmt(bwd.worst_rel_err, 3) + " over " +
                  std::to_string(bwd.instances) + " checks (limit 1e-4)";
  if (!fwd.first_failure.empty()) d += "; first forward failure " + fwd.first_failure;
  if (!bwd.first_failure.empty()) d += "; first backward failure " + bwd.first_failure;
  return {ok, d};
}

Verdict determinism() {
  const auto spec = build_dave2();
  const auto w = xavier_init(spec, 1);
  const Tensor frame = fixed_frame(1);
  const std::uint32_t ref = std::bit_cast<std::uint32_t>(forward_reference(spec, w, frame));
  std::size_t runs = 0, differing = 0;
  for (std::size_t workers : {1u, 2u, 4u}) {
    InferenceSession s(spec, w, workers);
    for (int rep = 0; rep < 10; ++rep, ++runs) {
      differing += std::bit_cast<std::uint32_t>(s.infer(frame)) != ref;
    }
  }
  return {differing == 0, std::to_string(runs - differing) + "/" + std::to_string(runs) +
                              " runs (workers 1,2,4 x 10) bit-identical, angle " +
                              format_double(std::bit_cast<float>(ref))};
}

LoopResult run_loop(SteeringModel& model, std::size_t iterations, bool free_running = false) {
  LoopConfig cfg;
  cfg.period_ms = 1000.0 / 30.0;
  cfg.iterations = iterations;
  cfg.free_running = free_running;
  SyntheticFrameSource gen(kFrameWidth, kFrameHeight, 1, 3);
  DeviceStubSource src({*gen.next()});
  NullSink sink;
  return run_control_loop(cfg, src, model, sink);
}

Verdict timing() {
  const double period = 1000.0 / 30.0;
  BusyWaitModel fast(5ms);
  const auto f = build_report(run_loop(fast, 300).samples);
  const bool fast_ok = f.deadline_misses == 0 && f.total.p99 < period;

  BusyWaitModel slow(40ms);
  const auto s = build_report(run_loop(slow, 100).samples);
  const bool slow_ok = s.deadline_misses == s.sample_count;

  // Weight values do not change the amount of arithmetic, so seeded
  // weights time the same as trained ones.
  InferenceSession session(build_dave2(), xavier_init(build_dave2(), 1));
  const auto r = build_report(run_loop(session, 300).samples);
  const double share = r.infer.mean / r.total.mean;
  const bool dominant = share > 0.5;

  return {fast_ok && slow_ok && dominant,
          "5 ms stub: " + std::to_string(f.deadline_misses) + " misses, p99 total " +
              fmt(f.total.p99) + " ms (period " + fmt(period) + "); 40 ms stub: " +
              std::to_string(s.deadline_misses) + "/" + std::to_string(s.sample_count) +
              " missed; DAVE-2 loop: infer " + fmt(r.infer.mean) + " of " + fmt(r.total.mean) +
              " ms mean total (" + fmt(100 * share, 3) + "%, needs > 50%)"};
}

// Contention plans pin tasks when the host has the cores for them;
// otherwise they run time-shared and the verdict says so.
ContentionPlan prepared(ContentionPlan plan, const std::string& name, std::size_t iterations) {
  plan.name = name;
  plan.iterations = iterations;
  plan.dedicated = cores_required(plan) <= available_cores();
  return plan;
}

std::string host_note(const ContentionPlan& plan) {
  return plan.dedicated ? "dedicated cores"
                        : "time-shared on " + std::to_string(available_cores()) + " core(s)";
}

Verdict scaling() {
  const unsigned cores = available_cores();
  const auto one = prepared(plan_from_shorthand("1Nx1C"), "scaling_1", 1000);
  const auto four = prepared(plan_from_shorthand("1Nx4C"), "scaling_4", 1000);
  const double m1 = run_plan(one).mean_infer_ms();
  const double m4 = run_plan(four).mean_infer_ms();
  const double gain = 1.0 - m4 / m1;
  std::string d = "mean infer " + fmt(m1) + " ms (1 worker) vs " + fmt(m4) + " ms (4 workers, " +
                  host_note(four) + "), reduction " + fmt(100 * gain, 3) + "% (needs >= 20%)";
  if (cores < 4) d += "; host has " + std::to_string(cores) + " core(s), criterion needs >= 4";
  return {cores >= 4 && gain >= 0.2, d};
}

Verdict contention() {
  constexpr std::size_t iters = 1000;
  const auto solo = prepared(plan_from_shorthand("1Nx1C"), "solo", iters);
  const double base = run_plan(solo).mean_infer_ms();
  std::map<BwMode, std::vector<double>> slowdown;
  std::string note;
  for (BwMode mode : {BwMode::read, BwMode::write}) {
    slowdown[mode].push_back(1.0);
    for (std::size_t n = 1; n <= 3; ++n) {
      auto plan = plan_from_shorthand("1Nx1C");
      add_corunners(plan, mode, n);
      plan = prepared(plan, to_string(mode) + std::to_string(n), iters);
      note = host_note(plan);
      slowdown[mode].push_back(run_plan(plan).mean_infer_ms() / base);
    }
  }
  const auto& rd = slowdown[BwMode::read];
  const auto& wr = slowdown[BwMode::write];
  bool monotone = true;
  for (const auto* series : {&rd, &wr})
    for (std::size_t i = 1; i < series->size(); ++i) monotone &= (*series)[i] >= 0.95 * (*series)[i - 1];
  const bool order = wr[3] >= rd[3];
  const bool floor = wr[3] >= 0.95 && rd[3] >= 0.95;
  auto series = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + fmt(x, 3);
    return s;
  };
  return {order && floor && monotone,
          "slowdown vs 0..3 co-runners (" + note + "): read " + series(rd) + "; write " +
              series(wr) + "; write>=read at 3: " + (order ? "yes" : "no") +
              ", non-decreasing within 5%: " + (monotone ? "yes" : "no")};
}

Verdict regulator() {
  bool ok = true;
  std::string d = "standalone";
  for (BwMode mode : {BwMode::read, BwMode::write}) {
    BandwidthTask task;
    task.mode = mode;
    task.array_bytes = 4 * kDefaultLlcBytes;
    task.duration = 1s;
    const double free = bw_run(task).mbps;
    d += " " + to_string(mode) + " (unthrottled " + fmt(free, 5) + " MB/s):";
    for (double budget : {100.0, 200.0, 400.0}) {
      const bool enough = free >= 2 * budget;
      const double got = regulated_run(task, {budget, 1.0}).bandwidth.mbps;
      const bool close = std::abs(got - budget) <= 0.1 * budget;
      ok &= enough && close;
      d += " " + fmt(budget) + "->" + fmt(got) + (enough ? "" : "(source too slow)");
    }
    d += ";";
  }

  constexpr std::size_t iters = 1000;
  std::vector<double> means;
  std::string note;
  for (double budget : {500.0, 400.0, 300.0, 200.0, 100.0}) {
    auto plan = plan_from_shorthand("1Nx1C");
    add_corunners(plan, BwMode::write, 3, budget);
    plan = prepared(plan, "regulated_" + fmt(budget), iters);
    note = host_note(plan);
    means.push_back(run_plan(plan).mean_infer_ms());
  }
  bool non_increasing = true;
  for (std::size_t i = 1; i < means.size(); ++i) non_increasing &= means[i] <= 1.05 * means[i - 1];
  d += " CNN mean infer at 500..100 MB/s x3 BwWrite (" + note + "):";
  for (double m : means) d += " " + fmt(m);
  d += std::string(" ms, non-increasing within 5%: ") + (non_increasing ? "yes" : "no");
  return {ok && non_increasing, d};
}

Verdict colors() {
  const auto u = usable_colors(CacheGeometry::parse("512K,16,64"), CacheGeometry::parse("32K,4,64"),
                               4096);
  return {u.bits == std::vector<unsigned>{13, 14} && u.count == 4, describe(u)};
}

NetworkSpec gradcheck_net() {
  NetworkSpec s;
  s.input_shape = {8, 8, 2};
  s.layers = {LayerSpec::make_conv(3, 3, 2, 3, 1), LayerSpec::make_conv(3, 3, 3, 2, 2),
              LayerSpec::make_flatten(), LayerSpec::make_fc(8, 4),
              LayerSpec::make_fc(4, 1, Activation::linear)};
  return s;
}

Verdict trainer() {
  // Loss reduction on the full network.
  const auto spec = build_dave2();
  const auto data = make_synthetic_linear(500, 0, 7);
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 100;
  cfg.learning_rate = 1e-3;
  cfg.seed = 7;
  const double before = evaluate(spec, xavier_init(spec, cfg.seed), data, Split::train);
  const auto result = train(spec, data, cfg);
  const double after = evaluate(spec, result.weights, data, Split::train);
  const double drop = 1.0 - after / before;

  // Balanced sampling on a dataset that is mostly straight.
  DatasetIndex mixed;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> straight(-10, 10), curve(20, 30);
  for (int i = 0; i < 400; ++i) {
    DatasetRecord r;
    r.frame = "m" + std::to_string(i);
    r.angle_deg = i % 5 == 0 ? (i % 2 ? 1.0f : -1.0f) * curve(rng) : straight(rng);
    mixed.add(r, RawImage(kFrameWidth, kFrameHeight, 3));
  }
  TrainConfig bal;
  bal.batch_size = 100;
  bal.sampler = SamplerKind::balanced;
  Rng brng(5);
  std::size_t curved = 0;
  const auto batch = sample_batch(mixed, bal, brng);
  for (std::size_t i : batch) curved += mixed.records[i].label == RoadLabel::curved;

  // Gradient check, clean and with one layer's gradient scaled.
  const auto net = gradcheck_net();
  auto w = xavier_init(net, 3).cast<double>();
  for (auto& l : w.layers)
    for (double& b : l.bias) b = 0.05;
  std::mt19937_64 grng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Example64> examples;
  for (int i = 0; i < 3; ++i) {
    Tensor64 t(net.input_shape);
    for (double& v : t.data()) v = u(grng);
    examples.push_back({t, 2 * u(grng) - 1});
  }
  const double clean = gradient_check(net, w, examples);
  const double corrupted = gradient_check(net, w, examples, GradientCorruption{3, 2.0});

  const bool ok = drop >= 0.5 && curved == 50 && batch.size() - curved == 50 && clean < 1e-4 &&
                  corrupted >= 1e-4;
  return {ok, "training-set MSE " + fmt(before) + " -> " + fmt(after) + " after 200 steps x 100 (" +
                  fmt(100 * drop, 3) + "% drop, needs >= 50%); balanced batch " +
                  std::to_string(curved) + " curved / " + std::to_string(batch.size() - curved) +
                  " straight; gradient check clean " + fmt(clean, 3) + ", corrupted " +
                  fmt(corrupted, 3) + " (flagged above 1e-4)"};
}

Verdict statistics() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 1500);
  std::normal_distribution<double> val(20.0, 5.0);
  std::size_t exact = 0;
  for (int n = 0; n < 1000; ++n) {
    std::vector<double> v(len(rng));
    for (double& x : v) x = val(rng);
    const Stats s = aggregate(v);
    const auto o = oracle::summarize(v);
    exact += s.mean == o.mean && s.max == o.max && s.min == o.min && s.p99 == o.p99 &&
             s.stdev == o.stdev;
  }
  const Stats h = aggregate(std::vector<double>{1, 2, 3, 4});
  const bool hand = std::abs(h.mean - 2.5) < 1e-6 && std::abs(h.max - 4) < 1e-6 &&
                    std::abs(h.p99 - 4) < 1e-6 && std::abs(h.stdev - 1.2909944) < 1e-6;
  return {exact == 1000 && hand, std::to_string(exact) +
                                     "/1000 random vectors match the sort-based reference exactly; "
                                     "[1,2,3,4] -> mean " + fmt(h.mean) + " max " + fmt(h.max) +
                                     " p99 " + fmt(h.p99) + " stdev " + fmt(h.stdev, 8)};
}

const std::vector<std::pair<std::string, std::function<Verdict()>>> kCriteria{
    {"architecture", architecture}, {"kernels", kernels},       {"determinism", determinism},
    {"timing", timing},             {"scaling", scaling},       {"contention", contention},
    {"regulator", regulator},       {"colors", colors},         {"trainer", trainer},
    {"statistics", statistics}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> wanted;
  bool list = false;
  app.add_option("--criterion", wanted, "Run only these criteria");
  app.add_flag("--list", list, "Print criterion names");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& [name, fn] : kCriteria) std::cout << name << "\n";
    return 0;
  }
  for (const auto& w : wanted) {
    if (std::none_of(kCriteria.begin(), kCriteria.end(), [&](const auto& c) { return c.first == w; })) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 1;
    }
  }
  int failures = 0;
  for (const auto& [name, fn] : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
