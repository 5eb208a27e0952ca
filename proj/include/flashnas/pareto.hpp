#pragma once

#include <vector>

#include <Eigen/Core>

#include "flashnas/trial.hpp"

namespace flashnas {

/// a dominates b: no worse in every objective, strictly better in one.
/// Both vectors are in minimization orientation.
template <typename DerivedA, typename DerivedB>
bool dominates(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  bool strict = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) > b(i)) return false;
    if (a(i) < b(i)) strict = true;
  }
  return strict;
}

/// Accuracy maximized, latency minimized.
bool dominates(const MetricVector& a, const MetricVector& b);

/// Nondominated done, feasible trials sorted by trial_id. Among equal
/// objective vectors only the lowest trial_id is kept. Throws
/// std::invalid_argument for a done trial with incomplete metrics.
std::vector<Trial> pareto_front(const std::vector<Trial>& trials,
                                const std::vector<ObjectiveSpec>& objectives = default_objectives());

/// Indices of the nondominated rows of `points` (minimization), ascending.
std::vector<int> nondominated(const std::vector<Eigen::VectorXd>& points);

/// Pareto rank per point, 0 for the first front.
std::vector<int> nondominated_ranks(const std::vector<Eigen::VectorXd>& points);

/// Crowding distance of each member of `front` (indices into points);
/// boundary members get +infinity.
std::vector<double> crowding_distance(const std::vector<Eigen::VectorXd>& points, const std::vector<int>& front);

struct FrontPoint {
  double accuracy = 0.0;
  double latency = 0.0;
};

/// Area dominated by `points` inside the box [ref_accuracy, inf) x (-inf, ref_latency].
/// Points outside the box contribute nothing.
double hypervolume_2d(const std::vector<FrontPoint>& points, double ref_accuracy, double ref_latency);

}  // namespace flashnas
