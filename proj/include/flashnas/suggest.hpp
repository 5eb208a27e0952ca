#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flashnas/archspace.hpp"
#include "flashnas/trial.hpp"

namespace flashnas {

class SpaceExhausted : public std::runtime_error {
 public:
  SpaceExhausted() : std::runtime_error("every configuration in the design space has been tried") {}
};

/// Why the last suggestion was made; written to the diagnostics log.
struct SuggestDiagnostics {
  std::string algorithm;
  std::string reason;  // "cold_start", "acquisition", "population", "fallback", "random"
  int candidates = 0;
  double acquisition = 0.0;
  std::vector<double> weights;
  std::vector<double> lengthscales;
  std::vector<double> noise;
  int generations = 0;
};

/// Encoded indices of every configuration in `history`, sorted and unique.
std::vector<std::uint64_t> tried_indices(const DesignSpace& space, const std::vector<Trial>& history);

/// Untried indices in ascending order.
std::vector<std::uint64_t> untried_indices(const DesignSpace& space, const std::vector<Trial>& history);

/// Produces one candidate per call and never repeats a configuration
/// already in the history. Throws SpaceExhausted when none is left.
class Suggester {
 public:
  virtual ~Suggester() = default;
  virtual ArchitectureConfig suggest(const std::vector<Trial>& history, std::mt19937_64& rng) = 0;
  virtual std::string_view name() const = 0;
  /// True when suggestions depend on internal state beyond the history.
  virtual bool stateful() const { return false; }
  const SuggestDiagnostics& diagnostics() const { return diagnostics_; }

 protected:
  SuggestDiagnostics diagnostics_;
};

class RandomSuggester final : public Suggester {
 public:
  explicit RandomSuggester(DesignSpace space) : space_(std::move(space)) {}
  ArchitectureConfig suggest(const std::vector<Trial>& history, std::mt19937_64& rng) override;
  std::string_view name() const override { return "random"; }

 private:
  DesignSpace space_;
};

struct BoSettings {
  int n_init = 8;
  double rho = 0.05;
  int mc_samples = 256;
  std::uint64_t max_exhaustive = 100000;
  int subsample = 10000;
};

/// GP Bayesian optimization: one GP per objective on observed-range
/// normalized values, a random augmented-Tchebycheff scalarization per
/// iteration, and expected improvement of the scalarized objective over
/// untried candidates.
class BoSuggester final : public Suggester {
 public:
  BoSuggester(DesignSpace space, std::vector<ObjectiveSpec> objectives, BoSettings settings = {});
  ArchitectureConfig suggest(const std::vector<Trial>& history, std::mt19937_64& rng) override;
  std::string_view name() const override { return "bo"; }

  /// Acquisition values over `candidates` for the given history and weights;
  /// `normal_draws` is mc_samples x objectives.
  Eigen::VectorXd acquisition(const std::vector<Trial>& history, const std::vector<std::uint64_t>& candidates,
                              const Eigen::VectorXd& weights, const Eigen::MatrixXd& normal_draws);

 private:
  DesignSpace space_;
  std::vector<ObjectiveSpec> objectives_;
  BoSettings settings_;
};

/// Augmented Tchebycheff scalarization of a normalized minimization vector.
double tchebycheff(const Eigen::VectorXd& f, const Eigen::VectorXd& weights, double rho);

/// Uniform weights on the simplex (Dirichlet(1)).
Eigen::VectorXd simplex_weights(int n, std::mt19937_64& rng);

struct FireflySettings {
  int population = 10;
  double beta0 = 1.0;
  double gamma = 1.0;
  double perturbation = 0.05;
  int max_stalled_generations = 50;
};

/// One generation of firefly moves, in place. `objectives` are minimization
/// vectors per firefly; brightness is Pareto rank, then crowding distance.
/// Each firefly moves toward every brighter one (in brightness order) by
/// beta0 exp(-gamma r^2) (x_j - x_i) plus a U(-s, s) perturbation per
/// dimension; the brightest take only the perturbation. Positions are clamped to [0, 1].
void firefly_generation(std::vector<UnitPoint>& positions, const std::vector<Eigen::VectorXd>& objectives,
                        const FireflySettings& settings, std::mt19937_64& rng);

class FireflySuggester final : public Suggester {
 public:
  FireflySuggester(DesignSpace space, std::vector<ObjectiveSpec> objectives, FireflySettings settings = {});
  ArchitectureConfig suggest(const std::vector<Trial>& history, std::mt19937_64& rng) override;
  std::string_view name() const override { return "firefly"; }
  bool stateful() const override { return true; }

  const std::vector<UnitPoint>& positions() const { return positions_; }

 private:
  DesignSpace space_;
  std::vector<ObjectiveSpec> objectives_;
  FireflySettings settings_;
  std::vector<UnitPoint> positions_;
};

std::unique_ptr<Suggester> make_suggester(std::string_view algorithm, const DesignSpace& space,
                                          const std::vector<ObjectiveSpec>& objectives, const BoSettings& bo = {},
                                          const FireflySettings& firefly = {});

}  // namespace flashnas
