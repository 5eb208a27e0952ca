#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flashnas/archspace.hpp"
#include "flashnas/evalbench.hpp"

namespace flashnas {

enum class TrialStatus { Pending, Done, Failed };

inline std::string_view trial_status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::Pending: return "pending";
    case TrialStatus::Done: return "done";
    case TrialStatus::Failed: return "failed";
  }
  return "pending";
}

inline TrialStatus trial_status_from_name(std::string_view n) {
  if (n == "pending") return TrialStatus::Pending;
  if (n == "done") return TrialStatus::Done;
  if (n == "failed") return TrialStatus::Failed;
  throw std::invalid_argument("unknown trial status '" + std::string(n) + "'");
}

struct Trial {
  int trial_id = 0;
  ArchitectureConfig config;
  MetricVector metrics;
  std::string schedule_mode = "flash";
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::Pending;
  /// False when a constraint is violated; such trials never join the front.
  bool feasible = true;
  double wall_time = 0.0;
  std::string error;

  bool usable() const { return status == TrialStatus::Done && feasible; }
};

/// One search objective read from a MetricVector.
struct ObjectiveSpec {
  std::string metric = "mlm_accuracy";
  bool maximize = true;
};

inline std::vector<ObjectiveSpec> default_objectives() { return {{"mlm_accuracy", true}, {"latency_mean", false}}; }

inline double metric_value(const MetricVector& m, std::string_view metric) {
  if (metric == "mlm_accuracy") return m.mlm_accuracy;
  if (metric == "nsp_accuracy") return m.nsp_accuracy;
  if (metric == "latency_mean") return m.latency_mean;
  if (metric == "latency_std") return m.latency_std;
  if (metric == "param_count") return static_cast<double>(m.param_count);
  throw std::invalid_argument("unknown metric '" + std::string(metric) + "'");
}

/// Objective values with maximized objectives negated, so smaller is better everywhere.
inline Eigen::VectorXd oriented(const MetricVector& m, const std::vector<ObjectiveSpec>& objectives) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(objectives.size()));
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const double x = metric_value(m, objectives[i].metric);
    v(static_cast<Eigen::Index>(i)) = objectives[i].maximize ? -x : x;
  }
  return v;
}

}  // namespace flashnas
