#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "picar/contention.hpp"

namespace picar {

/// Experiment matrix, usually read from JSON. Every section is optional;
/// an empty object runs nothing.
///
///   {
///     "iterations": 1000, "warmup": 1, "seed": 1, "llc_kib": 512,
///     "dedicated": true, "weights": "w.bin",
///     "baseline": true,
///     "core_scaling": [1, 2, 3, 4],
///     "coschedule": ["1Nx1C", "4Nx1C", "1Nx2C", "2Nx2C"],
///     "corunner_sweeps": {"modes": ["read", "write"], "counts": [0, 1, 2, 3]},
///     "regulator_sweeps": {"modes": ["read", "write"], "corunners": 3,
///                          "budgets_mbps": [500, 400, 300, 200, 100],
///                          "period_ms": 1.0},
///     "cache_colors": {"l2": "512K,16,64", "l1": "32K,4,64", "page": 4096}
///   }
///
/// One CSV per experiment: baseline, each core count, each co-scheduling
/// plan, each co-runner sweep mode, each regulator sweep mode, and the cache
/// color table; plus summary.csv.
struct MatrixConfig {
  std::size_t iterations = 1000;
  std::size_t warmup = 1;
  std::uint64_t seed = 1;
  std::size_t llc_bytes = kDefaultLlcBytes;
  bool dedicated = true;
  std::filesystem::path weights;

  bool baseline = false;
  std::vector<std::size_t> core_scaling;
  std::vector<std::string> coschedule;

  std::vector<BwMode> corunner_modes;
  std::vector<std::size_t> corunner_counts;

  std::vector<BwMode> regulator_modes;
  std::size_t regulator_corunners = 3;
  std::vector<double> regulator_budgets;
  double regulator_period_ms = 1.0;

  struct Colors {
    std::string l2;
    std::string l1;
    std::uint64_t page = 4096;
  };
  std::optional<Colors> cache_colors;

  std::size_t configured_experiments() const;
};

MatrixConfig parse_matrix(const std::string& json_text);
MatrixConfig load_matrix(const std::filesystem::path& path);

struct MatrixResult {
  std::vector<std::filesystem::path> experiment_csvs;
  std::filesystem::path summary_csv;
  std::vector<std::string> failures;  ///< "experiment: message"
  std::vector<SummaryRow> summary;
};

/// Runs every configured experiment; a failing experiment is recorded and
/// the rest still run.
MatrixResult run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir);

}  // namespace picar
