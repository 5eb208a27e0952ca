#pragma once

#include <cstdint>
#include <vector>

#include "flashnas/archspace.hpp"
#include "flashnas/evalbench.hpp"

namespace flashnas {

/// Deterministic bi-objective test function over a design space:
///   accuracy = a0 - sum_d a_d (u_d - c_d)^2
///   latency  = l0 + sum_d b_d (u_d - e_d)^2
/// in normalized coordinates u. The targets are the configurations that
/// strictly dominate `baseline`; the baseline is placed so there are exactly three.
struct LandscapeCoefficients {
  double a0 = 0.75;
  double l0 = 1e-3;
  UnitPoint accuracy_center = UnitPoint::Constant(0.5);
  UnitPoint latency_center = UnitPoint::Zero();
  UnitPoint accuracy_weight = (UnitPoint() << 0.08, 0.05, 0.03, 0.06, 0.04).finished();
  UnitPoint latency_weight = (UnitPoint() << 3e-4, 2e-4, 1e-4, 1.5e-4, 2.5e-4).finished();

  /// Default weights, latency growing from the smallest configuration and the
  /// accuracy optimum drawn uniformly from [0.5, 1]^5.
  static LandscapeCoefficients seeded(std::uint64_t seed);
};

class PlantedLandscape {
 public:
  explicit PlantedLandscape(DesignSpace space, LandscapeCoefficients coefficients = LandscapeCoefficients::seeded(1),
                            int n_targets = 3);

  const DesignSpace& space() const { return space_; }
  MetricVector evaluate(const ArchitectureConfig& c) const;
  const MetricVector& baseline() const { return baseline_; }
  /// Encoded indices, ascending.
  const std::vector<std::uint64_t>& targets() const { return targets_; }
  bool is_target(const ArchitectureConfig& c) const;

 private:
  DesignSpace space_;
  LandscapeCoefficients k_;
  MetricVector baseline_;
  std::vector<std::uint64_t> targets_;
};

}  // namespace flashnas
