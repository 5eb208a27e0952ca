#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flashnas/archspace.hpp"
#include "flashnas/corpus.hpp"
#include "flashnas/distill.hpp"
#include "flashnas/evalbench.hpp"
#include "flashnas/suggest.hpp"
#include "flashnas/trial.hpp"

namespace flashnas {

/// Hard filter on one metric: `upper` bounds it from above, otherwise from below.
struct Constraint {
  std::string metric;
  double bound = 0.0;
  bool upper = true;

  bool satisfied(const MetricVector& m) const {
    const double v = metric_value(m, metric);
    return upper ? v <= bound : v >= bound;
  }
};

struct TeacherSource {
  /// Empty: train a fresh teacher (cached in the run directory).
  std::string path;
  ModelShape shape;
  TeacherTraining training;
};

enum class EvaluatorKind { Distill, Planted };

struct RunConfig {
  std::string name = "run";
  std::string output_dir = "runs/run";
  std::uint64_t seed = 1;
  int max_iterations = 50;

  DesignSpace space = DesignSpace::standard();
  std::vector<ObjectiveSpec> objectives = default_objectives();
  std::vector<Constraint> constraints;

  std::string algorithm = "bo";
  BoSettings bo;
  FireflySettings firefly;

  EvaluatorKind evaluator = EvaluatorKind::Distill;
  Schedule flash;
  Schedule regular;
  DistillOptions distill;
  CorpusConfig corpus;
  LatencyHarnessConfig latency;
  TeacherSource teacher;
  int eval_batches = 8;
  int eval_batch_size = 32;

  /// "pareto" or "dominates-baseline".
  std::string promotion_filter = "pareto";
  std::optional<MetricVector> baseline;
  /// Hypervolume reference; latency defaults to 1.1 x the largest observed latency.
  double reference_accuracy = 0.0;
  std::optional<double> reference_latency;

  /// Experiment settings (bench-suggesters, rank-stability, flash-scaling).
  int bench_seeds = 20;
  int bench_max_iterations = 0;  // 0: the whole space
  std::vector<ArchitectureConfig> architectures;
  std::vector<double> flash_fractions{0.0125, 0.025, 0.05, 0.1};
  int experiment_repeats = 1;

  nlohmann::json source;  // the parsed document

  void validate() const;
  /// Output directory with FLASHNAS_OUTPUT_ROOT prepended when relative.
  std::filesystem::path run_dir() const;
};

inline constexpr const char* kOutputRootEnv = "FLASHNAS_OUTPUT_ROOT";

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const ArchitectureConfig& c);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MetricVector& m);
MetricVector metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Schedule& s);
nlohmann::json to_json(const ModelShape& s);

}  // namespace flashnas
