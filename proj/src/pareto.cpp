#include "flashnas/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace flashnas {

bool dominates(const MetricVector& a, const MetricVector& b) {
  const Eigen::Vector2d va(-a.mlm_accuracy, a.latency_mean);
  const Eigen::Vector2d vb(-b.mlm_accuracy, b.latency_mean);
  return dominates(va, vb);
}

std::vector<Trial> pareto_front(const std::vector<Trial>& trials, const std::vector<ObjectiveSpec>& objectives) {
  std::vector<const Trial*> pool;
  std::vector<Eigen::VectorXd> values;
  for (const auto& t : trials) {
    if (!t.usable()) continue;
    Eigen::VectorXd v = oriented(t.metrics, objectives);
    if (!v.allFinite() || !(t.metrics.latency_mean > 0.0))
      throw std::invalid_argument("trial " + std::to_string(t.trial_id) + " is done but has incomplete metrics");
    pool.push_back(&t);
    values.push_back(std::move(v));
  }
  std::vector<Trial> front;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < pool.size() && keep; ++j) {
      if (i == j) continue;
      if (dominates(values[j], values[i])) keep = false;
      else if (values[j] == values[i] && pool[j]->trial_id < pool[i]->trial_id) keep = false;
    }
    if (keep) front.push_back(*pool[i]);
  }
  std::sort(front.begin(), front.end(), [](const Trial& a, const Trial& b) { return a.trial_id < b.trial_id; });
  return front;
}

std::vector<int> nondominated(const std::vector<Eigen::VectorXd>& points) {
  std::vector<int> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < points.size() && keep; ++j) keep = !(i != j && dominates(points[j], points[i]));
    if (keep) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> nondominated_ranks(const std::vector<Eigen::VectorXd>& points) {
  const std::size_t n = points.size();
  std::vector<int> rank(n, -1);
  std::vector<int> dominated_by(n, 0);
  std::vector<std::vector<int>> dominates_list(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(points[i], points[j])) dominates_list[i].push_back(static_cast<int>(j));
      else if (dominates(points[j], points[i])) ++dominated_by[i];
    }
  }
  std::vector<int> current;
  for (std::size_t i = 0; i < n; ++i)
    if (dominated_by[i] == 0) current.push_back(static_cast<int>(i));
  for (int r = 0; !current.empty(); ++r) {
    std::vector<int> next;
    for (int i : current) {
      rank[static_cast<std::size_t>(i)] = r;
      for (int j : dominates_list[static_cast<std::size_t>(i)])
        if (--dominated_by[static_cast<std::size_t>(j)] == 0) next.push_back(j);
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return rank;
}

std::vector<double> crowding_distance(const std::vector<Eigen::VectorXd>& points, const std::vector<int>& front) {
  const std::size_t n = front.size();
  std::vector<double> d(n, 0.0);
  if (n == 0) return d;
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (n <= 2) return std::vector<double>(n, inf);
  const Eigen::Index dims = points[static_cast<std::size_t>(front[0])].size();
  std::vector<std::size_t> order(n);
  for (Eigen::Index m = 0; m < dims; ++m) {
    std::iota(order.begin(), order.end(), 0);
    auto val = [&](std::size_t k) { return points[static_cast<std::size_t>(front[k])](m); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val(a) < val(b); });
    const double span = val(order.back()) - val(order.front());
    d[order.front()] = inf;
    d[order.back()] = inf;
    if (!(span > 0.0)) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) d[order[k]] += (val(order[k + 1]) - val(order[k - 1])) / span;
  }
  return d;
}

double hypervolume_2d(const std::vector<FrontPoint>& points, double ref_accuracy, double ref_latency) {
  std::vector<FrontPoint> inside;
  for (const auto& p : points)
    if (p.accuracy > ref_accuracy && p.latency < ref_latency) inside.push_back(p);
  std::sort(inside.begin(), inside.end(), [](const FrontPoint& a, const FrontPoint& b) {
    return a.latency < b.latency || (a.latency == b.latency && a.accuracy > b.accuracy);
  });
  double area = 0.0;
  double best = ref_accuracy;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    best = std::max(best, inside[i].accuracy);
    const double next = i + 1 < inside.size() ? inside[i + 1].latency : ref_latency;
    area += (next - inside[i].latency) * (best - ref_accuracy);
  }
  return area;
}

}  // namespace flashnas
