#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flashnas/config.hpp"
#include "flashnas/distill.hpp"
#include "flashnas/landscape.hpp"
#include "flashnas/trial.hpp"

namespace flashnas {

inline constexpr int kTrialLogVersion = 1;
inline constexpr int kCsvVersion = 1;

struct EvalOutcome {
  MetricVector metrics;
  nlohmann::json details = nlohmann::json::object();
};

/// Scores one candidate; throws TrialFailure (or NonFiniteError) for a failed trial.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalOutcome evaluate(const ArchitectureConfig& config, std::uint64_t seed) = 0;
};

class PlantedEvaluator final : public Evaluator {
 public:
  explicit PlantedEvaluator(const DesignSpace& space) : landscape_(space) {}
  EvalOutcome evaluate(const ArchitectureConfig& config, std::uint64_t) override {
    return {landscape_.evaluate(config), nlohmann::json::object()};
  }
  const PlantedLandscape& landscape() const { return landscape_; }

 private:
  PlantedLandscape landscape_;
};

/// Distills the candidate from `teacher` under `schedule`, then measures
/// accuracy on the fixed eval split and latency without adapters.
class DistillEvaluator final : public Evaluator {
 public:
  DistillEvaluator(const RunConfig& config, const TransformerModel& teacher, Schedule schedule);
  EvalOutcome evaluate(const ArchitectureConfig& config, std::uint64_t seed) override;
  /// Student of the last successful evaluate() call.
  const Student* last_student() const { return last_.get(); }

 private:
  const RunConfig& config_;
  const TransformerModel& teacher_;
  Schedule schedule_;
  SyntheticCorpus corpus_;
  std::vector<TokenBatch> eval_set_;
  std::unique_ptr<LatencyProvider> latency_;
  std::unique_ptr<Student> last_;
};

/// Loads the cached teacher of `run_dir` (keyed by a hash of its settings)
/// or trains and caches a fresh one; `teacher.path` loads a snapshot instead.
/// Throws std::runtime_error when the teacher misses its accuracy target.
Teacher obtain_teacher(const RunConfig& config, const std::filesystem::path& run_dir);

std::uint64_t trial_seed(std::uint64_t run_seed, int trial_id);

nlohmann::json trial_to_json(const Trial& t, const nlohmann::json& details = nlohmann::json::object());
Trial trial_from_json(const nlohmann::json& j);
std::vector<Trial> read_trial_log(const std::filesystem::path& path);

struct SearchOptions {
  /// Stop (as if crashed) once this many trials are logged; negative disables.
  int stop_after = -1;
  /// Discard an existing log instead of resuming from it.
  bool fresh = false;
};

struct RunState {
  std::filesystem::path run_dir;
  std::vector<Trial> trials;
  std::vector<Trial> front;
  std::string phase = "exploring";  // exploring | promoting | done
};

/// Suggest -> distill -> evaluate -> observe until max_iterations or
/// exhaustion, resuming from an existing trial log in the run directory.
RunState run_search(const RunConfig& config, const SearchOptions& options = {});

/// Rebuilds the state of a run from its trial log.
RunState load_state(const std::filesystem::path& run_dir);
RunConfig load_run_dir_config(const std::filesystem::path& run_dir);

struct PromotedModel {
  Trial flash;
  MetricVector regular;
  bool ok = false;
  std::string error;
  std::filesystem::path snapshot;
};

struct PromoteSummary {
  std::vector<PromotedModel> models;
  std::optional<double> spearman;
  int regular_at_least_flash = 0;
};

/// Regular distillation of the selected front members; one failure does not
/// stop the others. `filter` overrides the configured promotion filter.
PromoteSummary promote(const std::filesystem::path& run_dir, const std::optional<std::string>& filter = {});

/// Writes trials.csv, pareto.csv and summary.json; returns the summary.
nlohmann::json report(const std::filesystem::path& run_dir);

extern const char* const kTrialCsvHeader;
std::string trial_csv_row(const Trial& t);

}  // namespace flashnas
