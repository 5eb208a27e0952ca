#include "flashnas/landscape.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "flashnas/pareto.hpp"

namespace flashnas {

LandscapeCoefficients LandscapeCoefficients::seeded(std::uint64_t seed) {
  LandscapeCoefficients k;
  auto rng = make_rng({seed, 0x1A5Dull});
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int d = 0; d < kNumFactors; ++d) k.accuracy_center(d) = u(rng);
  k.latency_center.setZero();
  return k;
}

PlantedLandscape::PlantedLandscape(DesignSpace space, LandscapeCoefficients coefficients, int n_targets)
    : space_(std::move(space)), k_(coefficients) {
  const std::uint64_t n = space_.cardinality();
  if (n_targets < 1 || static_cast<std::uint64_t>(n_targets) >= n)
    throw std::invalid_argument("planted landscape needs fewer targets than configurations");

  std::vector<MetricVector> all;
  std::vector<Eigen::VectorXd> points;
  all.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    all.push_back(evaluate(space_.decode(i)));
    points.push_back(Eigen::Vector2d(-all.back().mlm_accuracy, all.back().latency_mean));
  }
  std::vector<int> front = nondominated(points);
  std::sort(front.begin(), front.end(), [&](int a, int b) {
    return all[static_cast<std::size_t>(a)].latency_mean < all[static_cast<std::size_t>(b)].latency_mean;
  });
  const MetricVector& mid = all[static_cast<std::size_t>(front[front.size() / 2])];

  double acc_lo = all[0].mlm_accuracy, acc_hi = acc_lo, lat_lo = all[0].latency_mean, lat_hi = lat_lo;
  for (const auto& m : all) {
    acc_lo = std::min(acc_lo, m.mlm_accuracy);
    acc_hi = std::max(acc_hi, m.mlm_accuracy);
    lat_lo = std::min(lat_lo, m.latency_mean);
    lat_hi = std::max(lat_hi, m.latency_mean);
  }
  const double ra = acc_hi - acc_lo;
  const double rl = lat_hi - lat_lo;
  std::vector<double> margin(n);
  for (std::uint64_t i = 0; i < n; ++i)
    margin[i] = std::min((all[i].mlm_accuracy - mid.mlm_accuracy) / ra, (mid.latency_mean - all[i].latency_mean) / rl);
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) { return margin[a] > margin[b]; });
  const auto t = static_cast<std::size_t>(n_targets);
  if (!(margin[order[t - 1]] > margin[order[t]]))
    throw std::invalid_argument("planted landscape cannot separate the requested number of targets");

  const double cut = 0.5 * (margin[order[t - 1]] + margin[order[t]]);
  baseline_ = mid;
  baseline_.mlm_accuracy = mid.mlm_accuracy + cut * ra;
  baseline_.latency_mean = mid.latency_mean - cut * rl;
  for (std::uint64_t i = 0; i < n; ++i)
    if (dominates(all[i], baseline_)) targets_.push_back(i);
  if (targets_.size() != t) throw std::logic_error("planted landscape target count mismatch");
}

MetricVector PlantedLandscape::evaluate(const ArchitectureConfig& c) const {
  const UnitPoint u = space_.normalize(c);
  MetricVector m;
  m.mlm_accuracy = k_.a0 - k_.accuracy_weight.dot((u - k_.accuracy_center).cwiseAbs2());
  m.latency_mean = k_.l0 + k_.latency_weight.dot((u - k_.latency_center).cwiseAbs2());
  m.nsp_accuracy = m.mlm_accuracy;
  m.latency_std = 0.0;
  m.param_count = param_count(c, space_);
  return m;
}

bool PlantedLandscape::is_target(const ArchitectureConfig& c) const {
  return std::binary_search(targets_.begin(), targets_.end(), space_.encode(c));
}

}  // namespace flashnas
