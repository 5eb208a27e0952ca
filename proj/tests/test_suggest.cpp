#include <doctest.h>

#include <cmath>
#include <set>

#include "flashnas/experiments.hpp"
#include "flashnas/landscape.hpp"
#include "flashnas/suggest.hpp"

using namespace flashnas;

namespace {

DesignSpace desk_space() {
  return DesignSpace({FactorDomain{Factor::HiddenSize, {32, 48, 64, 96}},
                      FactorDomain{Factor::BottleneckSize, {16, 32, 48, 64}},
                      FactorDomain{Factor::AttentionHeads, {1, 2, 4, 8}},
                      FactorDomain{Factor::IntermediateSize, {64, 96, 128}}, FactorDomain{Factor::StackedFF, {1, 2, 3}}},
                     2, 64, 16, 32);
}

// 2 x 2 x 2 x 3 x 1 = 24 configurations.
DesignSpace tiny_space() {
  return DesignSpace({FactorDomain{Factor::HiddenSize, {32, 64}}, FactorDomain{Factor::BottleneckSize, {16, 32}},
                      FactorDomain{Factor::AttentionHeads, {1, 2}}, FactorDomain{Factor::IntermediateSize, {64, 96, 128}},
                      FactorDomain{Factor::StackedFF, {1}}},
                     2, 64, 16, 32);
}

Trial done(int id, const ArchitectureConfig& c, const MetricVector& m) {
  Trial t;
  t.trial_id = id;
  t.config = c;
  t.metrics = m;
  t.status = TrialStatus::Done;
  return t;
}

void check_no_repeats(const DesignSpace& space, const std::vector<Trial>& trials) {
  std::set<std::uint64_t> seen;
  for (const auto& t : trials) CHECK(seen.insert(space.encode(t.config)).second);
}

}  // namespace

TEST_CASE("random search visits the whole space once") {
  const DesignSpace space = desk_space();
  const PlantedLandscape land(space);
  RandomSuggester random(space);
  const auto trials = run_loop(random, [&](const ArchitectureConfig& c) { return land.evaluate(c); }, 1000, 3);
  CHECK(trials.size() == 576);
  check_no_repeats(space, trials);
  auto rng = make_rng({1});
  CHECK_THROWS_AS(random.suggest(trials, rng), SpaceExhausted);
}

TEST_CASE("suggesters are deterministic per seed") {
  const DesignSpace space = desk_space();
  const PlantedLandscape land(space);
  const auto eval = [&](const ArchitectureConfig& c) { return land.evaluate(c); };
  for (const char* algo : {"bo", "random", "firefly"}) {
    auto a = make_suggester(algo, space, default_objectives());
    auto b = make_suggester(algo, space, default_objectives());
    const auto ta = run_loop(*a, eval, 20, 5);
    const auto tb = run_loop(*b, eval, 20, 5);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].config == tb[i].config);
    check_no_repeats(space, ta);
  }
  CHECK_THROWS(make_suggester("annealing", space, default_objectives()));
}

TEST_CASE("bo and firefly exhaust a small space without repeats") {
  const DesignSpace space = tiny_space();
  const PlantedLandscape land(space);
  const auto eval = [&](const ArchitectureConfig& c) { return land.evaluate(c); };
  for (const char* algo : {"bo", "firefly"}) {
    auto s = make_suggester(algo, space, default_objectives());
    const auto trials = run_loop(*s, eval, 100, 7);
    CHECK(trials.size() == 24);
    check_no_repeats(space, trials);
    auto rng = make_rng({2});
    CHECK_THROWS_AS(s->suggest(trials, rng), SpaceExhausted);
  }
}

TEST_CASE("firefly covers the full space without repeats") {
  const DesignSpace space = desk_space();
  const PlantedLandscape land(space);
  FireflySuggester firefly(space, default_objectives());
  const auto trials = run_loop(firefly, [&](const ArchitectureConfig& c) { return land.evaluate(c); }, 1000, 9);
  CHECK(trials.size() == 576);
  check_no_repeats(space, trials);
  for (const auto& p : firefly.positions()) {
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() <= 1.0);
  }
}

TEST_CASE("bo cold start and the last untried point") {
  const DesignSpace space = desk_space();
  const PlantedLandscape land(space);
  BoSuggester bo(space, default_objectives());
  auto rng = make_rng({3});
  const ArchitectureConfig first = bo.suggest({}, rng);
  CHECK(bo.diagnostics().reason == "cold_start");
  auto rng2 = make_rng({3});
  CHECK(bo.suggest({}, rng2) == first);

  // Everything but index 300 tried; only a few trials are usable so the fit stays small.
  std::vector<Trial> history;
  for (std::uint64_t i = 0; i < space.cardinality(); ++i) {
    if (i == 300) continue;
    Trial t = done(static_cast<int>(history.size()), space.decode(i), land.evaluate(space.decode(i)));
    if (i % 50 != 0) t.status = TrialStatus::Failed;
    history.push_back(t);
  }
  CHECK(bo.suggest(history, rng) == space.decode(300));
  CHECK(bo.diagnostics().reason == "acquisition");
}

TEST_CASE("bo argmax is invariant to positive affine rescaling of an objective") {
  const DesignSpace space = desk_space();
  const PlantedLandscape land(space);
  std::vector<Trial> history;
  for (int i = 0; i < 12; ++i) {
    const auto c = space.sample_uniform(static_cast<std::uint64_t>(100 + i));
    bool seen = false;
    for (const auto& t : history) seen = seen || t.config == c;
    if (!seen) history.push_back(done(static_cast<int>(history.size()), c, land.evaluate(c)));
  }
  auto rescaled = [&](double scale, double shift) {
    auto h = history;
    for (auto& t : h) t.metrics.latency_mean = scale * t.metrics.latency_mean + shift;
    return h;
  };
  BoSuggester bo(space, default_objectives());
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r0 = make_rng({seed});
    const auto base = bo.suggest(history, r0);
    auto r1 = make_rng({seed});
    CHECK(bo.suggest(rescaled(4.0, 0.0), r1) == base);
    auto r2 = make_rng({seed});
    CHECK(bo.suggest(rescaled(0.25, 0.0), r2) == base);
    auto r3 = make_rng({seed});
    CHECK(bo.suggest(rescaled(3.0, 0.5), r3) == base);
  }
}

TEST_CASE("single firefly with zero perturbation stays put") {
  FireflySettings s;
  s.perturbation = 0.0;
  auto rng = make_rng({4});
  std::vector<UnitPoint> pos{(UnitPoint() << 0.1, 0.5, 0.9, 0.3, 0.7).finished()};
  const UnitPoint before = pos[0];
  firefly_generation(pos, {Eigen::Vector2d(-0.5, 0.1)}, s, rng);
  CHECK(pos[0] == before);
}

TEST_CASE("a dominated firefly moves toward the dominant one") {
  FireflySettings s;
  s.perturbation = 0.0;
  auto rng = make_rng({5});
  std::vector<UnitPoint> pos{UnitPoint::Constant(0.2), UnitPoint::Constant(0.6)};
  // Firefly 1 is better in both minimization objectives.
  firefly_generation(pos, {Eigen::Vector2d(-0.5, 0.3), Eigen::Vector2d(-0.7, 0.1)}, s, rng);
  // r^2 = 5 * 0.4^2 = 0.8, step = exp(-0.8) * 0.4 per dimension.
  const double expected = 0.2 + std::exp(-0.8) * 0.4;
  for (int d = 0; d < kNumFactors; ++d) CHECK(pos[0](d) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(pos[1] == UnitPoint::Constant(0.6));
  CHECK((pos[1] - pos[0]).norm() < (UnitPoint::Constant(0.6) - UnitPoint::Constant(0.2)).norm());
}

TEST_CASE("firefly moves stay in the unit cube") {
  FireflySettings s;
  s.perturbation = 0.5;
  s.beta0 = 2.0;
  auto rng = make_rng({6});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<UnitPoint> pos(10);
  std::vector<Eigen::VectorXd> obj(10);
  for (int gen = 0; gen < 20; ++gen) {
    for (int i = 0; i < 10; ++i) {
      if (gen == 0)
        for (int d = 0; d < kNumFactors; ++d) pos[static_cast<std::size_t>(i)](d) = u(rng);
      obj[static_cast<std::size_t>(i)] = Eigen::Vector2d(u(rng), u(rng));
    }
    firefly_generation(pos, obj, s, rng);
    for (const auto& p : pos) {
      CHECK(p.minCoeff() >= 0.0);
      CHECK(p.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("tchebycheff scalarization and simplex weights") {
  const Eigen::Vector2d f(0.2, 0.6);
  const Eigen::Vector2d w(0.5, 0.5);
  CHECK(tchebycheff(f, w, 0.05) == doctest::Approx(0.3 + 0.05 * 0.4));
  CHECK(tchebycheff(f, Eigen::Vector2d(1.0, 0.0), 0.0) == doctest::Approx(0.2));

  auto rng = make_rng({7});
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd v = simplex_weights(3, rng);
    CHECK(v.minCoeff() >= 0.0);
    CHECK(std::abs(v.sum() - 1.0) < 1e-12);
    mean += v;
  }
  mean /= n;
  for (int i = 0; i < 3; ++i) CHECK(mean(i) == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}

TEST_CASE("tried and untried indices partition the space") {
  const DesignSpace space = tiny_space();
  std::vector<Trial> history{done(0, space.decode(5), {}), done(1, space.decode(2), {}), done(2, space.decode(5), {})};
  CHECK(tried_indices(space, history) == std::vector<std::uint64_t>{2, 5});
  const auto untried = untried_indices(space, history);
  CHECK(untried.size() == 22);
  CHECK(std::find(untried.begin(), untried.end(), 5) == untried.end());
}
