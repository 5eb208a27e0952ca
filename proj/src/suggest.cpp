#include "flashnas/suggest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "flashnas/gp.hpp"
#include "flashnas/pareto.hpp"

namespace flashnas {

std::vector<std::uint64_t> tried_indices(const DesignSpace& space, const std::vector<Trial>& history) {
  std::vector<std::uint64_t> out;
  out.reserve(history.size());
  for (const auto& t : history) out.push_back(space.encode(t.config));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint64_t> untried_indices(const DesignSpace& space, const std::vector<Trial>& history) {
  const auto tried = tried_indices(space, history);
  std::vector<std::uint64_t> out;
  const std::uint64_t n = space.cardinality();
  out.reserve(n - tried.size());
  auto it = tried.begin();
  for (std::uint64_t i = 0; i < n; ++i) {
    if (it != tried.end() && *it == i) {
      ++it;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

namespace {

std::uint64_t pick(const std::vector<std::uint64_t>& pool, std::mt19937_64& rng) {
  if (pool.empty()) throw SpaceExhausted();
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

}  // namespace

ArchitectureConfig RandomSuggester::suggest(const std::vector<Trial>& history, std::mt19937_64& rng) {
  const auto pool = untried_indices(space_, history);
  diagnostics_ = {};
  diagnostics_.algorithm = "random";
  diagnostics_.reason = "random";
  diagnostics_.candidates = static_cast<int>(pool.size());
  return space_.decode(pick(pool, rng));
}

double tchebycheff(const Eigen::VectorXd& f, const Eigen::VectorXd& weights, double rho) {
  const Eigen::VectorXd wf = weights.cwiseProduct(f);
  return wf.maxCoeff() + rho * wf.sum();
}

Eigen::VectorXd simplex_weights(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = e(rng);
  return w / w.sum();
}

BoSuggester::BoSuggester(DesignSpace space, std::vector<ObjectiveSpec> objectives, BoSettings settings)
    : space_(std::move(space)), objectives_(std::move(objectives)), settings_(settings) {
  if (objectives_.empty()) throw std::invalid_argument("BO needs at least one objective");
  if (settings_.n_init < 1 || settings_.mc_samples < 1) throw std::invalid_argument("invalid BO settings");
}

Eigen::VectorXd BoSuggester::acquisition(const std::vector<Trial>& history,
                                         const std::vector<std::uint64_t>& candidates, const Eigen::VectorXd& weights,
                                         const Eigen::MatrixXd& normal_draws) {
  using GP = GaussianProcess<double>;
  std::vector<const Trial*> usable;
  for (const auto& t : history)
    if (t.usable()) usable.push_back(&t);
  const auto n = static_cast<Eigen::Index>(usable.size());
  const auto o = static_cast<Eigen::Index>(objectives_.size());
  if (n < 1) throw std::invalid_argument("acquisition needs at least one usable observation");

  GP::Mat x(n, kNumFactors);
  Eigen::MatrixXd y(n, o);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = space_.normalize(usable[static_cast<std::size_t>(i)]->config).transpose();
    y.row(i) = oriented(usable[static_cast<std::size_t>(i)]->metrics, objectives_).transpose();
  }
  for (Eigen::Index j = 0; j < o; ++j) {
    const double lo = y.col(j).minCoeff();
    const double range = y.col(j).maxCoeff() - lo;
    if (range > 0.0) y.col(j) = (y.col(j).array() - lo) / range;
    else y.col(j).setZero();
  }

  const auto m = static_cast<Eigen::Index>(candidates.size());
  GP::Mat q(m, kNumFactors);
  for (Eigen::Index c = 0; c < m; ++c)
    q.row(c) = space_.normalize(space_.decode(candidates[static_cast<std::size_t>(c)])).transpose();

  Eigen::MatrixXd mean(m, o);
  Eigen::MatrixXd sd(m, o);
  diagnostics_.lengthscales.clear();
  diagnostics_.noise.clear();
  for (Eigen::Index j = 0; j < o; ++j) {
    GP gp;
    gp.fit_grid(x, y.col(j));
    auto [mu, var] = gp.posterior(q);
    mean.col(j) = mu;
    sd.col(j) = var.cwiseSqrt();
    diagnostics_.lengthscales.push_back(gp.hyper().lengthscale);
    diagnostics_.noise.push_back(gp.hyper().noise_variance);
  }

  Eigen::VectorXd acq(m);
  if (o == 1) {
    const double best = y.col(0).minCoeff();
    for (Eigen::Index c = 0; c < m; ++c) acq(c) = expected_improvement(mean(c, 0), sd(c, 0) * sd(c, 0), best);
    return acq;
  }
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) best = std::min(best, tchebycheff(y.row(i).transpose(), weights, settings_.rho));
  Eigen::VectorXd f(o);
  for (Eigen::Index c = 0; c < m; ++c) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < normal_draws.rows(); ++r) {
      f = mean.row(c).transpose() + sd.row(c).transpose().cwiseProduct(normal_draws.row(r).transpose());
      total += std::max(0.0, best - tchebycheff(f, weights, settings_.rho));
    }
    acq(c) = total / static_cast<double>(normal_draws.rows());
  }
  return acq;
}

ArchitectureConfig BoSuggester::suggest(const std::vector<Trial>& history, std::mt19937_64& rng) {
  diagnostics_ = {};
  diagnostics_.algorithm = "bo";
  const auto untried = untried_indices(space_, history);
  if (untried.empty()) throw SpaceExhausted();
  const auto usable = std::count_if(history.begin(), history.end(), [](const Trial& t) { return t.usable(); });
  if (static_cast<int>(history.size()) < settings_.n_init || usable < 2) {
    diagnostics_.reason = "cold_start";
    diagnostics_.candidates = static_cast<int>(untried.size());
    return space_.decode(pick(untried, rng));
  }

  std::vector<std::uint64_t> candidates;
  if (space_.cardinality() <= settings_.max_exhaustive) {
    candidates = untried;
  } else {
    const std::unordered_set<std::uint64_t> tried_set = [&] {
      const auto t = tried_indices(space_, history);
      return std::unordered_set<std::uint64_t>(t.begin(), t.end());
    }();
    std::uniform_int_distribution<std::uint64_t> d(0, space_.cardinality() - 1);
    for (int i = 0; i < settings_.subsample; ++i) {
      const std::uint64_t c = d(rng);
      if (!tried_set.count(c)) candidates.push_back(c);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    if (candidates.empty()) candidates.push_back(pick(untried, rng));
  }

  const auto o = static_cast<int>(objectives_.size());
  const Eigen::VectorXd weights = simplex_weights(o, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd draws(settings_.mc_samples, o);
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws.data()[i] = normal(rng);

  const Eigen::VectorXd acq = acquisition(history, candidates, weights, draws);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < acq.size(); ++c)
    if (acq(c) > acq(best)) best = c;
  diagnostics_.reason = "acquisition";
  diagnostics_.candidates = static_cast<int>(candidates.size());
  diagnostics_.acquisition = acq(best);
  diagnostics_.weights.assign(weights.data(), weights.data() + weights.size());
  return space_.decode(candidates[static_cast<std::size_t>(best)]);
}

void firefly_generation(std::vector<UnitPoint>& positions, const std::vector<Eigen::VectorXd>& objectives,
                        const FireflySettings& s, std::mt19937_64& rng) {
  if (positions.size() != objectives.size()) throw std::invalid_argument("firefly: one objective vector per firefly");
  const std::size_t n = positions.size();
  const std::vector<int> rank = nondominated_ranks(objectives);
  std::vector<double> crowd(n, 0.0);
  for (int r = 0; r <= *std::max_element(rank.begin(), rank.end()); ++r) {
    std::vector<int> front;
    for (std::size_t i = 0; i < n; ++i)
      if (rank[i] == r) front.push_back(static_cast<int>(i));
    const auto d = crowding_distance(objectives, front);
    for (std::size_t k = 0; k < front.size(); ++k) crowd[static_cast<std::size_t>(front[k])] = d[k];
  }
  auto brighter = [&](std::size_t j, std::size_t i) {
    return rank[j] < rank[i] || (rank[j] == rank[i] && crowd[j] > crowd[i]);
  };
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return brighter(a, b); });

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto jitter = [&] {
    UnitPoint p;
    for (int d = 0; d < kNumFactors; ++d) p(d) = s.perturbation * u(rng);
    return p;
  };
  for (std::size_t i = 0; i < n; ++i) {
    bool moved = false;
    for (std::size_t j : order) {
      if (!brighter(j, i)) continue;
      const double r2 = (positions[j] - positions[i]).squaredNorm();
      positions[i] += s.beta0 * std::exp(-s.gamma * r2) * (positions[j] - positions[i]) + jitter();
      moved = true;
    }
    if (!moved) positions[i] += jitter();
    positions[i] = positions[i].cwiseMax(0.0).cwiseMin(1.0);
  }
}

FireflySuggester::FireflySuggester(DesignSpace space, std::vector<ObjectiveSpec> objectives, FireflySettings settings)
    : space_(std::move(space)), objectives_(std::move(objectives)), settings_(settings) {
  if (settings_.population < 1) throw std::invalid_argument("firefly population must be >= 1");
}

ArchitectureConfig FireflySuggester::suggest(const std::vector<Trial>& history, std::mt19937_64& rng) {
  diagnostics_ = {};
  diagnostics_.algorithm = "firefly";
  const auto untried = untried_indices(space_, history);
  if (untried.empty()) throw SpaceExhausted();
  const auto tried = tried_indices(space_, history);
  auto is_tried = [&](const ArchitectureConfig& c) {
    return std::binary_search(tried.begin(), tried.end(), space_.encode(c));
  };

  if (positions_.empty()) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < settings_.population; ++i) {
      UnitPoint p;
      for (int d = 0; d < kNumFactors; ++d) p(d) = u(rng);
      positions_.push_back(space_.normalize(space_.snap(p)));
    }
  }

  const Eigen::VectorXd worst =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(objectives_.size()), std::numeric_limits<double>::max());
  for (int gen = 0;; ++gen) {
    for (const auto& p : positions_) {
      const ArchitectureConfig c = space_.snap(p);
      if (!is_tried(c)) {
        diagnostics_.reason = "population";
        diagnostics_.generations = gen;
        diagnostics_.candidates = settings_.population;
        return c;
      }
    }
    if (gen >= settings_.max_stalled_generations) break;
    std::vector<Eigen::VectorXd> objectives;
    for (const auto& p : positions_) {
      const ArchitectureConfig c = space_.snap(p);
      Eigen::VectorXd v = worst;
      for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->config == c) {
          if (it->usable()) v = oriented(it->metrics, objectives_);
          break;
        }
      }
      objectives.push_back(std::move(v));
    }
    firefly_generation(positions_, objectives, settings_, rng);
    for (auto& p : positions_) p = space_.normalize(space_.snap(p));
  }
  diagnostics_.reason = "fallback";
  diagnostics_.generations = settings_.max_stalled_generations;
  diagnostics_.candidates = static_cast<int>(untried.size());
  return space_.decode(pick(untried, rng));
}

std::unique_ptr<Suggester> make_suggester(std::string_view algorithm, const DesignSpace& space,
                                          const std::vector<ObjectiveSpec>& objectives, const BoSettings& bo,
                                          const FireflySettings& firefly) {
  if (algorithm == "bo") return std::make_unique<BoSuggester>(space, objectives, bo);
  if (algorithm == "random") return std::make_unique<RandomSuggester>(space);
  if (algorithm == "firefly") return std::make_unique<FireflySuggester>(space, objectives, firefly);
  throw std::invalid_argument("unknown search algorithm '" + std::string(algorithm) + "'");
}

}  // namespace flashnas
