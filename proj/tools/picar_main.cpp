#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json_config.hpp"
#include "picar/cachemap.hpp"
#include "picar/contention.hpp"
#include "picar/davenet.hpp"
#include "picar/matrix.hpp"
#include "picar/pipeline.hpp"
#include "picar/regulator.hpp"
#include "picar/report.hpp"
#include "picar/trainer.hpp"

namespace fs = std::filesystem;
using namespace picar;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kFailed = 2;

WeightStore weights_or_xavier(const fs::path& weights, std::uint64_t seed) {
  const auto spec = build_dave2();
  return weights.empty() ? xavier_init(spec, seed) : load_weights(weights, spec);
}

void print_stats(const std::string& label, const Stats& s) {
  std::cout << std::left << std::setw(12) << label << std::right << std::fixed
            << std::setprecision(3) << " mean " << std::setw(9) << s.mean << "  p99 "
            << std::setw(9) << s.p99 << "  max " << std::setw(9) << s.max << "  stdev "
            << std::setw(8) << s.stdev << " ms\n";
  std::cout.unsetf(std::ios::floatfield);
}

// infer ------------------------------------------------------------------------

struct InferOpts {
  fs::path weights, image;
  std::size_t workers = 1;
  std::uint64_t seed = 1;
};

int run_infer(const InferOpts& o) {
  const auto spec = build_dave2();
  InferenceSession session(spec, weights_or_xavier(o.weights, o.seed), o.workers);
  const float angle = session.infer(preprocess(load_image(o.image)));
  const DutyRecord duty = angle_to_pwm(discretize_steering(angle));
  std::cout << "angle_deg " << format_double(angle) << "\n"
            << "steer_deg " << duty.angle_deg << "\n"
            << "pwm_duty " << format_double(duty.duty) << "\n";
  return kOk;
}

// train ------------------------------------------------------------------------

struct TrainOpts {
  fs::path manifest, val_manifest, out = "train_out";
  std::size_t synthetic = 0;
  std::size_t steps = 2000, batch = 100, workers = 1;
  double lr = 1e-3;
  std::string sampler = "uniform";
  std::uint64_t seed = 1;
};

int run_train(const TrainOpts& o) {
  const auto spec = build_dave2();
  DatasetIndex index;
  if (!o.manifest.empty()) {
    load_manifest(o.manifest, Split::train, index);
    if (!o.val_manifest.empty()) load_manifest(o.val_manifest, Split::validation, index);
  } else {
    const std::size_t n = o.synthetic ? o.synthetic : 1000;
    index = make_synthetic_linear(n, n / 5, o.seed);
    std::cout << "no manifest given; training on " << n << " synthetic frames\n";
  }
  TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.sampler = parse_sampler(o.sampler);
  cfg.worker_count = o.workers;
  const auto r = train(spec, index, cfg);

  fs::create_directories(o.out);
  save_weights(spec, r.weights, o.out / "weights.bin");
  write_loss_csv(r.loss_history, o.out / "loss.csv");
  std::cout << "steps " << r.loss_history.size() << "\n"
            << "first_loss " << format_double(r.loss_history.front()) << "\n"
            << "final_loss " << format_double(r.loss_history.back()) << "\n";
  if (r.validation_loss) std::cout << "validation_loss " << format_double(*r.validation_loss) << "\n";
  std::cout << "wrote " << (o.out / "weights.bin").string() << " and "
            << (o.out / "loss.csv").string() << "\n";
  return kOk;
}

// loop -------------------------------------------------------------------------

struct LoopOpts {
  double period_ms = 33.3;
  std::size_t iterations = 1000, warmup = 1, workers = 1;
  fs::path weights, frames, out;
  std::optional<double> stub_ms;
  bool no_realtime = false;
  std::uint64_t seed = 1;
};

int run_loop(const LoopOpts& o) {
  std::unique_ptr<SteeringModel> model;
  if (o.stub_ms) {
    model = std::make_unique<BusyWaitModel>(std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::duration<double, std::milli>(*o.stub_ms)));
  } else {
    model = std::make_unique<InferenceSession>(build_dave2(), weights_or_xavier(o.weights, o.seed),
                                               o.workers);
  }
  std::unique_ptr<FrameSource> source;
  if (!o.frames.empty()) {
    source = std::make_unique<DirectoryFrameSource>(o.frames);
  } else {
    // Stand-in camera replaying a few recorded frames.
    SyntheticFrameSource gen(kFrameWidth, kFrameHeight, 8, o.seed);
    std::vector<RawImage> recorded;
    while (auto f = gen.next()) recorded.push_back(std::move(*f));
    source = std::make_unique<DeviceStubSource>(std::move(recorded));
  }
  std::unique_ptr<ActuatorSink> sink;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    sink = std::make_unique<LogFileSink>(o.out / "actuator.csv");
  } else {
    sink = std::make_unique<NullSink>();
  }

  LoopConfig cfg;
  cfg.period_ms = o.period_ms;
  cfg.iterations = o.iterations;
  cfg.warmup = o.warmup;
  cfg.worker_count = o.workers;
  cfg.realtime = !o.no_realtime;
  const LoopResult r = run_control_loop(cfg, *source, *model, *sink);
  if (r.samples.empty()) throw std::runtime_error("frame source produced no timed iterations");
  TimingReport rep = build_report(r.samples);
  rep.complete = r.complete;

  std::cout << "period " << o.period_ms << " ms, " << rep.sample_count << " iterations ("
            << r.warmup_discarded << " warmup discarded), scheduler "
            << (r.realtime_applied ? "SCHED_FIFO" : "SCHED_OTHER") << "\n";
  print_stats("capture", rep.capture);
  print_stats("preprocess", rep.preprocess);
  print_stats("infer", rep.infer);
  print_stats("actuate", rep.actuate);
  print_stats("total", rep.total);
  std::cout << "deadline misses " << rep.deadline_misses << " / " << rep.sample_count << "\n";
  if (!r.complete) std::cout << "warning: frame source ran out before all iterations\n";
  if (!o.out.empty()) {
    write_timing_csv(r.samples, o.out / "timing.csv");
    const auto rows = summary_rows("loop", rep);
    write_summary_csv(rows, o.out / "summary.csv");
    std::cout << "wrote " << (o.out / "timing.csv").string() << "\n";
  }
  return kOk;
}

// plan-based experiments -------------------------------------------------------

struct PlanOpts {
  std::size_t iterations = 1000, warmup = 1;
  std::uint64_t seed = 1;
  fs::path weights, out;
  bool shared = false;
  std::size_t llc_kib = kDefaultLlcBytes / 1024;
};

void apply(const PlanOpts& o, ContentionPlan& plan) {
  plan.iterations = o.iterations;
  plan.warmup = o.warmup;
  plan.seed = o.seed;
  plan.weights = o.weights;
  plan.llc_bytes = o.llc_kib * 1024;
  if (o.shared) plan.dedicated = false;
}

void report_plan(const PlanResult& r, double baseline_ms) {
  std::cout << "plan " << r.plan << "\n";
  for (const auto& c : r.cnn) {
    print_stats("  " + c.name, c.report.infer);
    if (baseline_ms > 0) {
      std::cout << "    slowdown " << format_double(c.report.infer.mean / baseline_ms) << "\n";
    }
  }
  for (const auto& b : r.corunners) {
    std::cout << "  " << b.name << " " << std::fixed << std::setprecision(1) << b.bandwidth.mbps
              << " MB/s";
    std::cout.unsetf(std::ios::floatfield);
    if (b.budget_mbps) std::cout << " (budget " << *b.budget_mbps << ")";
    std::cout << "\n";
  }
  for (const auto& w : r.warnings) std::cout << "  warning: " << w << "\n";
}

void maybe_write(const PlanOpts& o, const std::vector<PlanResult>& results, const std::string& file) {
  if (o.out.empty()) return;
  fs::create_directories(o.out);
  write_plan_csv(results, o.out / file);
  std::cout << "wrote " << (o.out / file).string() << "\n";
}

struct BenchOpts : PlanOpts {
  std::vector<std::size_t> workers{1, 2, 3, 4};
};

int run_bench(const BenchOpts& o) {
  std::vector<PlanResult> results;
  double base = 0;
  for (std::size_t w : o.workers) {
    auto plan = plan_from_shorthand("1Nx" + std::to_string(w) + "C");
    plan.name = "scaling_" + std::to_string(w) + "core";
    apply(o, plan);
    results.push_back(run_plan(plan));
    if (base == 0) base = results.back().mean_infer_ms();
    report_plan(results.back(), 0);
    std::cout << "  speedup vs " << o.workers.front() << " worker(s) "
              << format_double(base / results.back().mean_infer_ms()) << "\n";
  }
  maybe_write(o, results, "scaling.csv");
  return kOk;
}

struct ContendOpts : PlanOpts {
  fs::path plan;
  std::string shorthand = "1Nx1C";
  std::vector<std::size_t> corunners{0};
  std::string mode = "write";
  std::optional<double> budget;
};

int run_contend(const ContendOpts& o) {
  std::vector<PlanResult> results;
  if (!o.plan.empty()) {
    auto plan = load_plan(o.plan);
    apply(o, plan);
    results.push_back(run_plan(plan));
    report_plan(results.back(), 0);
  } else {
    double base = 0;
    for (std::size_t n : o.corunners) {
      auto plan = plan_from_shorthand(o.shorthand);
      add_corunners(plan, parse_bw_mode(o.mode), n, o.budget);
      plan.name = o.shorthand + "+" + std::to_string(n) + o.mode;
      apply(o, plan);
      results.push_back(run_plan(plan));
      if (base == 0) base = results.back().mean_infer_ms();
      report_plan(results.back(), o.corunners.size() > 1 ? base : 0);
    }
  }
  maybe_write(o, results, "contention.csv");
  return kOk;
}

struct RegulateOpts : PlanOpts {
  std::vector<double> budgets{500, 400, 300, 200, 100};
  std::size_t corunners = 3;
  std::string mode = "write";
  double period_ms = 1.0;
  bool standalone = false;
  double duration_ms = 1000;
  double array_mib = 0;
};

int run_regulate(const RegulateOpts& o) {
  const BwMode mode = parse_bw_mode(o.mode);
  if (o.standalone) {
    BandwidthTask task;
    task.mode = mode;
    task.array_bytes = o.array_mib > 0 ? static_cast<std::size_t>(o.array_mib * 1024 * 1024)
                                        : 4 * o.llc_kib * 1024;
    task.duration = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::duration<double, std::milli>(o.duration_ms));
    const auto free = bw_run(task);
    std::cout << "unregulated " << format_double(free.mbps) << " MB/s\n";
    for (double b : o.budgets) {
      const auto r = regulated_run(task, {b, o.period_ms});
      std::cout << "budget " << format_double(b) << " MB/s achieved " << format_double(r.bandwidth.mbps)
                << " MB/s (" << r.throttles << " throttles)\n";
    }
    return kOk;
  }
  std::vector<PlanResult> results;
  double base = 0;
  {
    auto solo = plan_from_shorthand("1Nx1C");
    solo.name = "solo";
    apply(o, solo);
    results.push_back(run_plan(solo));
    base = results.back().mean_infer_ms();
    report_plan(results.back(), 0);
  }
  for (double b : o.budgets) {
    auto plan = plan_from_shorthand("1Nx1C");
    add_corunners(plan, mode, o.corunners, b);
    plan.name = "regulated_" + format_double(b);
    plan.regulator_period_ms = o.period_ms;
    apply(o, plan);
    results.push_back(run_plan(plan));
    report_plan(results.back(), base);
  }
  maybe_write(o, results, "regulated.csv");
  return kOk;
}

// colors -----------------------------------------------------------------------

struct ColorsOpts {
  std::string l2 = "512K,16,64", l1 = "32K,4,64";
  std::uint64_t page = 4096;
};

std::string bit_list(const std::vector<unsigned>& bits) {
  std::string s;
  for (unsigned b : bits) s += (s.empty() ? "" : ",") + std::to_string(b);
  return s.empty() ? "none" : s;
}

int run_colors(const ColorsOpts& o) {
  const auto l2 = CacheGeometry::parse(o.l2, o.page);
  const auto l1 = CacheGeometry::parse(o.l1, o.page);
  const auto usable = usable_colors(l2, l1, o.page);
  std::cout << describe(usable) << "\n";
  const std::pair<const char*, const CacheGeometry*> levels[] = {{"l2", &l2}, {"l1", &l1}};
  for (const auto& [name, g] : levels) {
    const auto r = set_index_bits(*g);
    std::cout << name << " sets " << g->sets() << ", set-index bits ";
    if (r.empty) std::cout << "none";
    else std::cout << r.lo << "-" << r.hi;
    std::cout << ", color bits " << bit_list(color_bits(*g)) << "\n";
  }
  std::cout << "color,address_bits\n";
  for (std::uint64_t c = 0; c < usable.count; ++c) {
    std::cout << c << ',';
    for (std::size_t k = 0; k < usable.bits.size(); ++k) {
      std::cout << (k ? " " : "") << "b" << usable.bits[k] << "=" << ((c >> k) & 1u);
    }
    std::cout << "\n";
  }
  return kOk;
}

// matrix -----------------------------------------------------------------------

const char* kDefaultMatrix = R"({
  "baseline": true,
  "core_scaling": [1, 2, 3, 4],
  "coschedule": ["1Nx1C", "4Nx1C", "1Nx2C", "2Nx2C"],
  "corunner_sweeps": {"modes": ["read", "write"], "counts": [0, 1, 2, 3]},
  "regulator_sweeps": {"modes": ["read", "write"], "corunners": 3,
                       "budgets_mbps": [500, 400, 300, 200, 100]},
  "cache_colors": {"l2": "512K,16,64", "l1": "32K,4,64", "page": 4096}
})";

struct MatrixOpts {
  fs::path matrix, out = "results";
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  bool shared = false;
};

int run_matrix_cmd(const MatrixOpts& o) {
  MatrixConfig cfg = o.matrix.empty() ? parse_matrix(kDefaultMatrix) : load_matrix(o.matrix);
  if (o.iterations) cfg.iterations = *o.iterations;
  if (o.seed) cfg.seed = *o.seed;
  if (o.shared) cfg.dedicated = false;
  const auto r = run_matrix(cfg, o.out);
  std::cout << r.experiment_csvs.size() << " experiment CSVs and " << r.summary_csv.string()
            << " written\n";
  for (const auto& f : r.failures) std::cout << "failed: " << f << "\n";
  return r.failures.empty() ? kOk : kFailed;
}

void add_plan_opts(CLI::App* sub, PlanOpts& o) {
  sub->add_option("--iterations", o.iterations, "Timed iterations per CNN task")->capture_default_str();
  sub->add_option("--warmup", o.warmup, "Leading iterations discarded")->capture_default_str();
  sub->add_option("--seed", o.seed, "Seed for Xavier weights and frames")->capture_default_str();
  sub->add_option("--weights", o.weights, "Weight file (default: Xavier weights from --seed)");
  sub->add_option("--out", o.out, "Directory for the results CSV");
  sub->add_option("--llc-kib", o.llc_kib, "Last-level cache size; co-runner arrays are 4x this")
      ->capture_default_str();
  sub->add_flag("--shared", o.shared,
                "Allow tasks to share cores when the host is too small (results are flagged)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAVE-2 steering network: inference, training, real-time loop and "
               "shared-resource contention experiments"};
  app.name("picar");
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; command-line flags take precedence");
  app.require_subcommand(1);

  InferOpts infer_o;
  auto* infer = app.add_subcommand("infer", "Predict the steering angle for one frame");
  infer->add_option("--weights", infer_o.weights, "Weight file (default: Xavier weights from --seed)");
  infer->add_option("--image", infer_o.image, "Frame (.ppm or 66x200x3 .raw)")->required();
  infer->add_option("--workers", infer_o.workers, "Inference worker threads")->capture_default_str();
  infer->add_option("--seed", infer_o.seed)->capture_default_str();

  TrainOpts train_o;
  auto* trainc = app.add_subcommand(
      "train", "Train with SGD on a manifest of `<frame>,<angle>` lines (or synthetic frames)");
  trainc->add_option("--manifest", train_o.manifest, "Training manifest");
  trainc->add_option("--val-manifest", train_o.val_manifest, "Validation manifest");
  trainc->add_option("--synthetic", train_o.synthetic,
                     "Synthetic linear frames when no manifest is given (default 1000)");
  trainc->add_option("--steps", train_o.steps)->capture_default_str();
  trainc->add_option("--batch", train_o.batch)->capture_default_str();
  trainc->add_option("--lr", train_o.lr, "Learning rate")->capture_default_str();
  trainc->add_option("--sampler", train_o.sampler, "uniform or balanced (50/50 curved/straight)")
      ->capture_default_str();
  trainc->add_option("--workers", train_o.workers)->capture_default_str();
  trainc->add_option("--seed", train_o.seed)->capture_default_str();
  trainc->add_option("--out", train_o.out, "Directory for weights.bin and loss.csv")
      ->capture_default_str();

  LoopOpts loop_o;
  auto* loop = app.add_subcommand(
      "loop", "Periodic capture/preprocess/infer/actuate loop with per-stage timing (30 Hz by default)");
  loop->add_option("--period-ms", loop_o.period_ms)->capture_default_str();
  loop->add_option("--iterations", loop_o.iterations)->capture_default_str();
  loop->add_option("--warmup", loop_o.warmup)->capture_default_str();
  loop->add_option("--workers", loop_o.workers)->capture_default_str();
  loop->add_option("--weights", loop_o.weights);
  loop->add_option("--frames", loop_o.frames, "Directory of .ppm/.raw frames (default: device stub)");
  loop->add_option("--stub-ms", loop_o.stub_ms, "Replace inference with a busy-wait of this length");
  loop->add_flag("--no-realtime", loop_o.no_realtime, "Do not request SCHED_FIFO");
  loop->add_option("--seed", loop_o.seed)->capture_default_str();
  loop->add_option("--out", loop_o.out, "Directory for timing.csv, summary.csv, actuator.csv");

  BenchOpts bench_o;
  auto* bench = app.add_subcommand("bench", "Core scaling: mean inference time per worker count");
  add_plan_opts(bench, bench_o);
  bench->add_option("--workers", bench_o.workers, "Worker counts to sweep")
      ->delimiter(',')
      ->capture_default_str();

  ContendOpts contend_o;
  auto* contend = app.add_subcommand(
      "contend", "Co-scheduling and co-runner interference (BwRead/BwWrite) on the CNN task");
  add_plan_opts(contend, contend_o);
  contend->add_option("--plan", contend_o.plan, "JSON plan file (overrides the options below)");
  contend->add_option("--shorthand", contend_o.shorthand, "1Nx1C, 4Nx1C, 1Nx2C or 2Nx2C")
      ->capture_default_str();
  contend->add_option("--corunners", contend_o.corunners, "Co-runner counts to sweep")
      ->delimiter(',')
      ->capture_default_str();
  contend->add_option("--mode", contend_o.mode, "read or write")->capture_default_str();
  contend->add_option("--budget-mbps", contend_o.budget, "Regulate each co-runner to this budget");

  RegulateOpts reg_o;
  auto* regulate = app.add_subcommand(
      "regulate", "Memory bandwidth regulation of co-runners and its effect on the CNN task");
  add_plan_opts(regulate, reg_o);
  regulate->add_option("--budgets", reg_o.budgets, "Per-co-runner budgets in MB/s (10^6 B/s)")
      ->delimiter(',')
      ->capture_default_str();
  regulate->add_option("--corunners", reg_o.corunners)->capture_default_str();
  regulate->add_option("--mode", reg_o.mode, "read or write")->capture_default_str();
  regulate->add_option("--period-ms", reg_o.period_ms, "Regulation period")->capture_default_str();
  regulate->add_flag("--standalone", reg_o.standalone,
                     "Measure achieved vs budgeted bandwidth of one co-runner, no CNN");
  regulate->add_option("--duration-ms", reg_o.duration_ms, "Standalone run length")
      ->capture_default_str();
  regulate->add_option("--array-mib", reg_o.array_mib, "Standalone array size (default 4x LLC)");

  ColorsOpts colors_o;
  auto* colors = app.add_subcommand("colors", "Page colors usable for partitioning a shared L2");
  colors->add_option("--l2", colors_o.l2, "SIZE,WAYS,LINE")->capture_default_str();
  colors->add_option("--l1", colors_o.l1, "SIZE,WAYS,LINE")->capture_default_str();
  colors->add_option("--page", colors_o.page, "Page size in bytes")->capture_default_str();

  MatrixOpts matrix_o;
  auto* matrix = app.add_subcommand("matrix", "Run the whole experiment matrix into CSVs");
  matrix->add_option("--matrix", matrix_o.matrix, "Matrix JSON (default: every experiment)");
  matrix->add_option("--out", matrix_o.out, "Output directory")->capture_default_str();
  matrix->add_option("--iterations", matrix_o.iterations, "Override iterations per run");
  matrix->add_option("--seed", matrix_o.seed, "Override the seed");
  matrix->add_flag("--shared", matrix_o.shared, "Allow oversubscribed plans to share cores");

  if (argc < 2) {
    std::cout << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (infer->parsed()) return run_infer(infer_o);
    if (trainc->parsed()) return run_train(train_o);
    if (loop->parsed()) return run_loop(loop_o);
    if (bench->parsed()) return run_bench(bench_o);
    if (contend->parsed()) return run_contend(contend_o);
    if (regulate->parsed()) return run_regulate(reg_o);
    if (colors->parsed()) return run_colors(colors_o);
    if (matrix->parsed()) return run_matrix_cmd(matrix_o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
