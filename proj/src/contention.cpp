#include "picar/contention.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <latch>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "picar/platform.hpp"
#include "picar/regulator.hpp"

namespace picar {

std::string to_string(BwMode mode) { return mode == BwMode::read ? "read" : "write"; }

BwMode parse_bw_mode(const std::string& text) {
  if (text == "read" || text == "BwRead") return BwMode::read;
  if (text == "write" || text == "BwWrite") return BwMode::write;
  throw std::invalid_argument("unknown bandwidth mode '" + text + "' (expected read or write)");
}

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch())
      .count();
}

// Keeps stores to `p` from being treated as dead.
inline void clobber(void* p) { asm volatile("" : : "r"(p) : "memory"); }

volatile std::uint64_t g_checksum_sink;

}  // namespace

BandwidthRunner::BandwidthRunner(const BandwidthTask& task) : task_(task) {
  constexpr std::size_t word = sizeof(std::uint64_t);
  if (task_.array_bytes < word) throw ContentionError("bandwidth array must hold at least one word");
  if (task_.chunk_bytes < word || task_.chunk_bytes % word != 0) {
    throw ContentionError("chunk size must be a positive multiple of 8 bytes");
  }
  try {
    // Filling the vector touches every page before timing starts.
    array_.assign(task_.array_bytes / word, 1);
  } catch (const std::bad_alloc&) {
    throw ContentionError("cannot allocate " + std::to_string(task_.array_bytes) +
                          " byte bandwidth array");
  }
}

BwResult BandwidthRunner::run(ChunkObserver* observer) {
  const std::size_t words = array_.size();
  const std::size_t chunk_words = task_.chunk_bytes / sizeof(std::uint64_t);
  const auto start = Clock::now();
  const bool has_deadline = task_.duration.count() > 0;
  const auto deadline = start + task_.duration;

  std::uint64_t bytes = 0;
  std::uint64_t sum = 0;
  std::uint64_t* data = array_.data();
  bool done = false;
  std::size_t chunk_counter = 0;

  for (std::size_t pass = 0; !done && (task_.passes == 0 || pass < task_.passes); ++pass) {
    for (std::size_t i = 0; i < words; i += chunk_words) {
      const std::size_t n = std::min(chunk_words, words - i);
      std::uint64_t* p = data + i;
      if (task_.mode == BwMode::read) {
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < n; ++k) s += p[k];
        sum += s;
      } else {
        for (std::size_t k = 0; k < n; ++k) p[k] = 0xA5A5A5A5A5A5A5A5ull;
        clobber(p);
      }
      bytes += n * sizeof(std::uint64_t);
      if (observer) observer->on_chunk(n * sizeof(std::uint64_t));
      if (task_.stop && task_.stop->load(std::memory_order_relaxed)) {
        done = true;
        break;
      }
      if (has_deadline && (++chunk_counter & 15) == 0 && Clock::now() >= deadline) {
        done = true;
        break;
      }
    }
    if (has_deadline && Clock::now() >= deadline) done = true;
  }
  const auto end = Clock::now();
  checksum_ = sum;
  g_checksum_sink = sum;

  BwResult r;
  r.bytes = bytes;
  r.seconds = std::chrono::duration<double>(end - start).count();
  r.mbps = r.seconds > 0.0 ? static_cast<double>(bytes) / r.seconds / 1e6 : 0.0;
  return r;
}

BwResult bw_run(const BandwidthTask& task) {
  const bool pinned = task.core ? pin_current_thread(*task.core) : false;
  BandwidthRunner runner(task);
  BwResult r = runner.run();
  r.pinned = pinned;
  return r;
}

// Plans --------------------------------------------------------------------

ContentionPlan plan_from_shorthand(const std::string& shorthand) {
  static const std::regex pattern(R"((\d+)Nx(\d+)C)");
  std::smatch m;
  if (!std::regex_match(shorthand, m, pattern)) {
    throw ContentionError("plan shorthand must look like 4Nx1C, got '" + shorthand + "'");
  }
  const int models = std::stoi(m[1]);
  const int cores_each = std::stoi(m[2]);
  if (models < 1 || cores_each < 1) throw ContentionError("plan shorthand needs N, C >= 1");
  ContentionPlan plan;
  plan.name = shorthand;
  int next_core = 0;
  for (int i = 0; i < models; ++i) {
    TaskSpec t;
    t.kind = TaskKind::cnn;
    t.name = "cnn" + std::to_string(i);
    t.worker_count = static_cast<std::size_t>(cores_each);
    for (int c = 0; c < cores_each; ++c) t.cores.push_back(next_core++);
    plan.tasks.push_back(t);
  }
  return plan;
}

void add_corunners(ContentionPlan& plan, BwMode mode, std::size_t count,
                   std::optional<double> budget_mbps) {
  int next_core = 0;
  std::size_t existing = 0;
  for (const auto& t : plan.tasks) {
    for (int c : t.cores) next_core = std::max(next_core, c + 1);
    existing += t.kind == TaskKind::bandwidth ? 1 : 0;
  }
  for (std::size_t i = 0; i < count; ++i) {
    TaskSpec t;
    t.kind = TaskKind::bandwidth;
    t.name = (mode == BwMode::read ? "bwread" : "bwwrite") + std::to_string(existing + i);
    t.mode = mode;
    t.cores = {next_core++};
    t.budget_mbps = budget_mbps;
    plan.tasks.push_back(t);
  }
}

std::size_t cores_required(const ContentionPlan& plan) {
  std::set<int> cores;
  for (const auto& t : plan.tasks) cores.insert(t.cores.begin(), t.cores.end());
  return cores.size();
}

ContentionPlan parse_plan(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContentionError(std::string("plan is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ContentionError("plan must be a JSON object");
  ContentionPlan plan;
  try {
    if (j.contains("shorthand")) plan = plan_from_shorthand(j.at("shorthand").get<std::string>());
    plan.name = j.value("name", plan.name.empty() ? std::string("plan") : plan.name);
    plan.dedicated = j.value("dedicated", plan.dedicated);
    plan.iterations = j.value("iterations", plan.iterations);
    plan.warmup = j.value("warmup", plan.warmup);
    plan.llc_bytes = j.value("llc_kib", plan.llc_bytes / 1024) * 1024;
    plan.regulator_period_ms = j.value("regulator_period_ms", plan.regulator_period_ms);
    plan.seed = j.value("seed", plan.seed);
    if (j.contains("weights")) plan.weights = j.at("weights").get<std::string>();
    for (const auto& jt : j.value("tasks", nlohmann::json::array())) {
      TaskSpec t;
      const std::string kind = jt.at("kind").get<std::string>();
      if (kind == "cnn") {
        t.kind = TaskKind::cnn;
      } else if (kind == "bw" || kind == "bandwidth") {
        t.kind = TaskKind::bandwidth;
      } else {
        throw ContentionError("unknown task kind '" + kind + "'");
      }
      t.cores = jt.value("cores", std::vector<int>{});
      t.worker_count = jt.value("worker_count", std::size_t{1});
      if (jt.contains("mode")) t.mode = parse_bw_mode(jt.at("mode").get<std::string>());
      t.array_mib = jt.value("array_mib", 0.0);
      if (jt.contains("budget_mbps") && !jt.at("budget_mbps").is_null()) {
        t.budget_mbps = jt.at("budget_mbps").get<double>();
      }
      t.name = jt.value("name", (t.kind == TaskKind::cnn ? "cnn" : "bw" + to_string(t.mode)) +
                                    std::to_string(plan.tasks.size()));
      plan.tasks.push_back(t);
    }
    if (j.contains("corunners")) {
      const auto& c = j.at("corunners");
      std::optional<double> budget;
      if (c.contains("budget_mbps") && !c.at("budget_mbps").is_null()) {
        budget = c.at("budget_mbps").get<double>();
      }
      add_corunners(plan, parse_bw_mode(c.at("mode").get<std::string>()),
                    c.at("count").get<std::size_t>(), budget);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContentionError(std::string("invalid plan: ") + e.what());
  }
  return plan;
}

ContentionPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContentionError("cannot read plan " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

double PlanResult::mean_infer_ms() const {
  if (cnn.empty()) throw ContentionError("plan '" + plan + "' has no CNN task");
  return cnn.front().report.infer.mean;
}

namespace {

void validate_plan(const ContentionPlan& plan, unsigned host_cores, PlanResult& result) {
  if (plan.tasks.empty()) throw ContentionError("plan '" + plan.name + "' has no tasks");
  bool any_cnn = false;
  std::set<int> seen;
  for (const auto& t : plan.tasks) {
    any_cnn |= t.kind == TaskKind::cnn;
    if (t.kind == TaskKind::cnn && t.worker_count == 0) {
      throw ContentionError("task " + t.name + ": worker_count must be >= 1");
    }
    if (t.budget_mbps && !(*t.budget_mbps > 0.0)) {
      throw ContentionError("task " + t.name + ": budget_mbps must be positive");
    }
    for (int c : t.cores) {
      const bool exists = c >= 0 && static_cast<unsigned>(c) < host_cores;
      const bool fresh = seen.insert(c).second;
      if (plan.dedicated && !exists) {
        throw ContentionError("plan '" + plan.name + "' needs core " + std::to_string(c) +
                              " but the host has " + std::to_string(host_cores));
      }
      if (plan.dedicated && !fresh) {
        throw ContentionError("plan '" + plan.name + "' oversubscribes core " + std::to_string(c));
      }
    }
  }
  if (!any_cnn) throw ContentionError("plan '" + plan.name + "' has no CNN task");
  if (!plan.dedicated && cores_required(plan) > host_cores) {
    result.warnings.push_back("plan needs " + std::to_string(cores_required(plan)) +
                              " cores, host has " + std::to_string(host_cores) +
                              "; tasks run unpinned and share cores");
  }
}

bool try_pin(const std::vector<int>& cores, unsigned host_cores) {
  if (cores.empty()) return true;
  const int c = cores.front();
  if (c < 0 || static_cast<unsigned>(c) >= host_cores) return false;
  return pin_current_thread(c);
}

}  // namespace

PlanResult run_plan(const ContentionPlan& plan) {
  PlanResult result;
  result.plan = plan.name;
  const unsigned host_cores = available_cores();
  validate_plan(plan, host_cores, result);

  const NetworkSpec spec = build_dave2();
  const WeightStore weights =
      plan.weights.empty() ? xavier_init(spec, plan.seed) : load_weights(plan.weights, spec);

  std::vector<const TaskSpec*> cnn_tasks, bw_tasks;
  for (const auto& t : plan.tasks) (t.kind == TaskKind::cnn ? cnn_tasks : bw_tasks).push_back(&t);

  result.cnn.resize(cnn_tasks.size());
  result.corunners.resize(bw_tasks.size());
  std::vector<char> pinned(plan.tasks.size(), 1);
  // Oversubscribed shared plans run unpinned; the report flags it.
  const bool pin = plan.dedicated || cores_required(plan) <= host_cores;

  std::latch ready(static_cast<std::ptrdiff_t>(plan.tasks.size()));
  std::atomic<bool> go{false};
  std::atomic<bool> stop{false};
  std::atomic<std::int64_t> main_start{0};
  std::vector<std::exception_ptr> errors(plan.tasks.size());
  const auto epoch = Clock::now();

  auto release_corunners = [&] {
    std::int64_t expected = 0;
    main_start.compare_exchange_strong(expected, now_ns());
    go.store(true);
    go.notify_all();
  };

  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < cnn_tasks.size(); ++i) {
    threads.emplace_back([&, i] {
      const TaskSpec& t = *cnn_tasks[i];
      bool arrived = false;
      try {
        pinned[i] = pin ? try_pin(t.cores, host_cores) : t.cores.empty();
        std::vector<int> worker_cores;
        if (pin) worker_cores = t.cores;
        InferenceSession session(spec, weights, t.worker_count, worker_cores);
        if (!session.affinity_honored()) pinned[i] = 0;
        // A device-stub camera with one recorded frame; capture cost stays negligible.
        SyntheticFrameSource gen(kFrameWidth, kFrameHeight, 1, plan.seed + i);
        DeviceStubSource source({*gen.next()}, plan.warmup + plan.iterations);
        NullSink sink;
        LoopConfig cfg;
        cfg.iterations = plan.iterations;
        cfg.warmup = plan.warmup;
        cfg.free_running = true;
        cfg.realtime = false;
        cfg.on_timed_start = release_corunners;
        arrived = true;
        ready.arrive_and_wait();
        LoopResult loop = run_control_loop(cfg, source, session, sink);
        auto& out = result.cnn[i];
        out.name = t.name;
        out.cores = t.cores;
        out.report = build_report(loop.samples);
        out.report.complete = loop.complete;
        out.samples = std::move(loop.samples);
      } catch (...) {
        errors[i] = std::current_exception();
        if (!arrived) ready.count_down();
        release_corunners();
      }
    });
  }

  for (std::size_t k = 0; k < bw_tasks.size(); ++k) {
    const std::size_t slot = cnn_tasks.size() + k;
    threads.emplace_back([&, k, slot] {
      const TaskSpec& t = *bw_tasks[k];
      bool counted = false;
      try {
        pinned[slot] = pin ? try_pin(t.cores, host_cores) : t.cores.empty();
        BandwidthTask task;
        task.mode = t.mode;
        task.array_bytes = t.array_mib > 0.0
                               ? static_cast<std::size_t>(t.array_mib * 1024.0 * 1024.0)
                               : 4 * plan.llc_bytes;
        task.stop = &stop;
        BandwidthRunner runner(task);
        std::optional<BandwidthRegulator> regulator;
        if (t.budget_mbps) {
          const RegulatorBudget budget{*t.budget_mbps, plan.regulator_period_ms};
          if (budget_bytes_per_period(budget.budget_mbps, budget.period_ms) < task.chunk_bytes) {
            throw RegulatorConfigError("budget of " + std::to_string(budget.budget_mbps) +
                                       " MB/s is below one chunk per period");
          }
          set_timer_slack_ns(1);
          regulator.emplace(budget, task.chunk_bytes, epoch);
        }
        ready.arrive_and_wait();
        counted = true;
        go.wait(false);
        auto& out = result.corunners[k];
        out.name = t.name;
        out.mode = t.mode;
        out.budget_mbps = t.budget_mbps;
        out.first_byte_ns = now_ns();
        out.bandwidth = runner.run(regulator ? &*regulator : nullptr);
        out.bandwidth.pinned = pinned[slot];
        if (regulator) regulator->finish();
      } catch (...) {
        errors[slot] = std::current_exception();
        if (!counted) ready.count_down();
      }
    });
  }

  // CNN threads finish on their own; co-runners are then told to stop.
  for (std::size_t i = 0; i < cnn_tasks.size(); ++i) threads[i].join();
  stop = true;
  release_corunners();
  for (std::size_t i = cnn_tasks.size(); i < threads.size(); ++i) threads[i].join();

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
  result.main_start_ns = main_start.load();
  result.affinity_honored =
      std::all_of(pinned.begin(), pinned.end(), [](char p) { return p != 0; });
  if (!result.affinity_honored) {
    result.warnings.push_back("core affinity not honored for every task");
  }
  return result;
}

void write_plan_csv(const std::vector<PlanResult>& results, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContentionError("cannot write " + path.string());
  out << "plan,task,metric,value\n";
  for (const auto& r : results) {
    for (const auto& c : r.cnn) {
      const std::pair<const char*, const Stats*> stages[] = {{"infer", &c.report.infer},
                                                             {"total", &c.report.total}};
      for (const auto& [stage, st] : stages) {
        const std::string s = stage;
        out << r.plan << ',' << c.name << ',' << s << "_mean_ms," << format_double(st->mean) << '\n';
        out << r.plan << ',' << c.name << ',' << s << "_max_ms," << format_double(st->max) << '\n';
        out << r.plan << ',' << c.name << ',' << s << "_p99_ms," << format_double(st->p99) << '\n';
        out << r.plan << ',' << c.name << ',' << s << "_stdev_ms," << format_double(st->stdev) << '\n';
      }
      out << r.plan << ',' << c.name << ",samples," << c.report.sample_count << '\n';
    }
    for (const auto& b : r.corunners) {
      out << r.plan << ',' << b.name << ",bandwidth_mbps," << format_double(b.bandwidth.mbps) << '\n';
      out << r.plan << ',' << b.name << ",bytes," << b.bandwidth.bytes << '\n';
      if (b.budget_mbps) {
        out << r.plan << ',' << b.name << ",budget_mbps," << format_double(*b.budget_mbps) << '\n';
      }
    }
    out << r.plan << ",plan,affinity_honored," << (r.affinity_honored ? 1 : 0) << '\n';
  }
}

}  // namespace picar
