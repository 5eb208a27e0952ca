#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flashnas/config.hpp"
#include "flashnas/distill.hpp"
#include "flashnas/landscape.hpp"
#include "flashnas/suggest.hpp"

namespace flashnas {

using MetricFn = std::function<MetricVector(const ArchitectureConfig&)>;
using StopFn = std::function<bool(const std::vector<Trial>&)>;

/// In-memory search loop: one suggestion per iteration with a per-iteration
/// stream make_rng({seed, iteration}); stops at `max_iterations`, exhaustion or `stop`.
std::vector<Trial> run_loop(Suggester& suggester, const MetricFn& evaluate, int max_iterations, std::uint64_t seed,
                            const StopFn& stop = {});

struct SuggesterBench {
  std::string algorithm;
  std::vector<int> iterations_to_all;    // per seed
  std::vector<int> iterations_to_first;  // per seed
  double median_to_all = 0.0;
  double median_to_first = 0.0;
};

/// Iterations each algorithm needs to evaluate every planted target, over
/// `config.bench_seeds` paired seeds.
std::vector<SuggesterBench> bench_suggesters(const RunConfig& config,
                                             const std::vector<std::string>& algorithms = {"bo", "random", "firefly"});
nlohmann::json to_json(const std::vector<SuggesterBench>& bench);

struct ObjectiveComparison {
  int seeds = 0;
  /// Seeds where the multi-objective front holds a configuration that
  /// neither single-objective run evaluated.
  int seeds_with_unique_points = 0;
  std::vector<int> unique_points;  // per seed
};

ObjectiveComparison compare_objectives(const RunConfig& config, int iterations = 50);

struct RankStability {
  std::vector<ArchitectureConfig> architectures;
  std::vector<double> flash_accuracy;
  std::vector<double> regular_accuracy;
  double spearman = 0.0;
  Schedule flash;
  Schedule regular;
};

/// Distills `config.architectures` under both schedules and correlates their MLM accuracies.
RankStability rank_stability(const RunConfig& config, const TransformerModel& teacher);
nlohmann::json to_json(const RankStability& r);

struct FlashScaling {
  std::vector<double> fractions;
  std::vector<int> total_steps;
  std::vector<double> mean_accuracy;
};

/// Mean final MLM accuracy over `config.architectures` x repeats for flash
/// budgets at each fraction of the regular budget.
FlashScaling flash_scaling(const RunConfig& config, const TransformerModel& teacher);
nlohmann::json to_json(const FlashScaling& f);

}  // namespace flashnas
