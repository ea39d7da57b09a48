#include "picar/matrix.hpp"

#include <bit>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "picar/cachemap.hpp"
#include "picar/platform.hpp"
#include "picar/report.hpp"

namespace picar {

std::size_t MatrixConfig::configured_experiments() const {
  return (baseline ? 1 : 0) + core_scaling.size() + coschedule.size() +
         (corunner_counts.empty() ? 0 : corunner_modes.size()) +
         (regulator_budgets.empty() ? 0 : regulator_modes.size()) + (cache_colors ? 1 : 0);
}

MatrixConfig parse_matrix(const std::string& json_text) {
  MatrixConfig m;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw std::invalid_argument("matrix config must be a JSON object");
    m.iterations = j.value("iterations", m.iterations);
    m.warmup = j.value("warmup", m.warmup);
    m.seed = j.value("seed", m.seed);
    m.llc_bytes = j.value("llc_kib", m.llc_bytes / 1024) * 1024;
    m.dedicated = j.value("dedicated", m.dedicated);
    if (j.contains("weights")) m.weights = j.at("weights").get<std::string>();
    m.baseline = j.value("baseline", false);
    m.core_scaling = j.value("core_scaling", std::vector<std::size_t>{});
    m.coschedule = j.value("coschedule", std::vector<std::string>{});
    auto modes = [](const nlohmann::json& arr) {
      std::vector<BwMode> out;
      for (const auto& s : arr) out.push_back(parse_bw_mode(s.get<std::string>()));
      return out;
    };
    if (j.contains("corunner_sweeps")) {
      const auto& c = j.at("corunner_sweeps");
      m.corunner_modes = modes(c.value("modes", nlohmann::json::array({"read", "write"})));
      m.corunner_counts = c.value("counts", std::vector<std::size_t>{0, 1, 2, 3});
    }
    if (j.contains("regulator_sweeps")) {
      const auto& r = j.at("regulator_sweeps");
      m.regulator_modes = modes(r.value("modes", nlohmann::json::array({"read", "write"})));
      m.regulator_corunners = r.value("corunners", m.regulator_corunners);
      m.regulator_budgets =
          r.value("budgets_mbps", std::vector<double>{500, 400, 300, 200, 100});
      m.regulator_period_ms = r.value("period_ms", m.regulator_period_ms);
    }
    if (j.contains("cache_colors")) {
      const auto& c = j.at("cache_colors");
      m.cache_colors = MatrixConfig::Colors{c.value("l2", std::string("512K,16,64")),
                                            c.value("l1", std::string("32K,4,64")),
                                            c.value("page", std::uint64_t{4096})};
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid matrix config: ") + e.what());
  }
  return m;
}

MatrixConfig load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read matrix config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matrix(ss.str());
}

namespace {

class MatrixRunner {
 public:
  MatrixRunner(const MatrixConfig& cfg, std::filesystem::path out) : cfg_(cfg), out_(std::move(out)) {}

  MatrixResult run() {
    std::filesystem::create_directories(out_);
    FrequencyMonitor monitor(default_frequency_paths(), std::chrono::milliseconds(500));

    if (cfg_.baseline) {
      attempt("baseline", [&] {
        auto r = run_plan(make_plan("baseline", "1Nx1C"));
        baseline_ms_ = r.mean_infer_ms();
        emit("baseline", {r});
      });
    }
    for (std::size_t w : cfg_.core_scaling) {
      const std::string name = "scaling_" + std::to_string(w) + "core";
      attempt(name, [&] {
        emit(name, {run_plan(make_plan(name, "1Nx" + std::to_string(w) + "C"))});
      });
    }
    for (const auto& s : cfg_.coschedule) {
      const std::string name = "cosched_" + s;
      attempt(name, [&] { emit(name, {run_plan(make_plan(name, s))}); });
    }
    if (!cfg_.corunner_counts.empty()) {
      for (BwMode mode : cfg_.corunner_modes) {
        const std::string name = "corunners_" + to_string(mode);
        attempt(name, [&] {
          std::vector<PlanResult> series;
          for (std::size_t n : cfg_.corunner_counts) {
            auto plan = make_plan(name + "_" + std::to_string(n), "1Nx1C");
            add_corunners(plan, mode, n);
            series.push_back(run_plan(plan));
          }
          emit(name, series);
        });
      }
    }
    if (!cfg_.regulator_budgets.empty()) {
      for (BwMode mode : cfg_.regulator_modes) {
        const std::string name = "regulated_" + to_string(mode);
        attempt(name, [&] {
          std::vector<PlanResult> series;
          for (double budget : cfg_.regulator_budgets) {
            auto plan = make_plan(name + "_" + format_double(budget), "1Nx1C");
            plan.regulator_period_ms = cfg_.regulator_period_ms;
            add_corunners(plan, mode, cfg_.regulator_corunners, budget);
            series.push_back(run_plan(plan));
          }
          emit(name, series);
        });
      }
    }
    if (cfg_.cache_colors) {
      attempt("cache_colors", [&] { emit_colors(*cfg_.cache_colors); });
    }

    const FrequencyTrace freq = monitor.stop();
    if (!result_.summary.empty() || !result_.failures.empty()) {
      result_.summary.push_back({"environment", "cores", "host", static_cast<double>(available_cores())});
      result_.summary.push_back({"environment", "frequency_available", "host", freq.available ? 1.0 : 0.0});
      result_.summary.push_back({"environment", "frequency_throttled", "host", freq.throttled ? 1.0 : 0.0});
    }
    result_.summary_csv = out_ / "summary.csv";
    write_summary_csv(result_.summary, result_.summary_csv);
    return std::move(result_);
  }

 private:
  ContentionPlan make_plan(const std::string& name, const std::string& shorthand) const {
    ContentionPlan plan = plan_from_shorthand(shorthand);
    plan.name = name;
    plan.dedicated = cfg_.dedicated;
    plan.iterations = cfg_.iterations;
    plan.warmup = cfg_.warmup;
    plan.llc_bytes = cfg_.llc_bytes;
    plan.seed = cfg_.seed;
    plan.weights = cfg_.weights;
    return plan;
  }

  void attempt(const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      result_.failures.push_back(name + ": " + e.what());
      result_.summary.push_back({name, "failed", "all", 1.0});
      std::cerr << "experiment " << name << " failed: " << e.what() << '\n';
    }
  }

  void emit(const std::string& name, const std::vector<PlanResult>& results) {
    const auto path = out_ / (name + ".csv");
    write_plan_csv(results, path);
    result_.experiment_csvs.push_back(path);
    for (const auto& r : results) {
      for (const auto& c : r.cnn) {
        const std::string exp = r.plan + (r.cnn.size() > 1 ? "/" + c.name : "");
        result_.summary.push_back({exp, "mean_ms", "infer", c.report.infer.mean});
        result_.summary.push_back({exp, "p99_ms", "infer", c.report.infer.p99});
        result_.summary.push_back({exp, "max_ms", "infer", c.report.infer.max});
        result_.summary.push_back({exp, "stdev_ms", "infer", c.report.infer.stdev});
        if (baseline_ms_ > 0.0) {
          result_.summary.push_back({exp, "slowdown", "infer", c.report.infer.mean / baseline_ms_});
        }
      }
      for (const auto& b : r.corunners) {
        result_.summary.push_back({r.plan + "/" + b.name, "bandwidth_mbps", "corunner", b.bandwidth.mbps});
      }
      if (!r.affinity_honored) result_.summary.push_back({r.plan, "affinity_honored", "all", 0.0});
    }
  }

  void emit_colors(const MatrixConfig::Colors& c) {
    const auto l2 = CacheGeometry::parse(c.l2, c.page);
    const auto l1 = CacheGeometry::parse(c.l1, c.page);
    const auto usable = usable_colors(l2, l1, c.page);
    const auto path = out_ / "cache_colors.csv";
    std::ofstream out(path, std::ios::trunc);
    out << "pfn,color\n";
    const std::uint64_t cycle = usable.bits.empty()
                                    ? 1
                                    : std::uint64_t{1} << (usable.bits.back() + 1 -
                                                           std::countr_zero(c.page));
    for (std::uint64_t pfn = 0; pfn < cycle; ++pfn) {
      out << pfn << ',' << color_of(pfn, usable.bits, c.page) << '\n';
    }
    result_.experiment_csvs.push_back(path);
    result_.summary.push_back({"cache_colors", "usable_colors", "l2", static_cast<double>(usable.count)});
  }

  const MatrixConfig& cfg_;
  std::filesystem::path out_;
  MatrixResult result_;
  double baseline_ms_ = 0.0;
};

}  // namespace

MatrixResult run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir) {
  return MatrixRunner(config, out_dir).run();
}

}  // namespace picar
