#include "flashnas/experiments.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "flashnas/evalbench.hpp"
#include "flashnas/pareto.hpp"
#include "flashnas/stats.hpp"

namespace flashnas {

using nlohmann::json;

std::vector<Trial> run_loop(Suggester& suggester, const MetricFn& evaluate, int max_iterations, std::uint64_t seed,
                            const StopFn& stop) {
  std::vector<Trial> trials;
  for (int i = 0; i < max_iterations; ++i) {
    auto rng = make_rng({seed, static_cast<std::uint64_t>(i)});
    Trial t;
    try {
      t.config = suggester.suggest(trials, rng);
    } catch (const SpaceExhausted&) {
      break;
    }
    t.trial_id = i;
    t.metrics = evaluate(t.config);
    t.status = TrialStatus::Done;
    trials.push_back(t);
    if (stop && stop(trials)) break;
  }
  return trials;
}

std::vector<SuggesterBench> bench_suggesters(const RunConfig& config, const std::vector<std::string>& algorithms) {
  const PlantedLandscape landscape(config.space);
  const auto cap = config.bench_max_iterations > 0 ? config.bench_max_iterations
                                                   : static_cast<int>(config.space.cardinality());
  const MetricFn eval = [&](const ArchitectureConfig& c) { return landscape.evaluate(c); };
  const auto n_targets = landscape.targets().size();
  std::vector<SuggesterBench> out;
  for (const auto& algorithm : algorithms) {
    SuggesterBench b;
    b.algorithm = algorithm;
    for (int s = 0; s < config.bench_seeds; ++s) {
      auto suggester = make_suggester(algorithm, config.space, default_objectives(), config.bo, config.firefly);
      int first = -1;
      int all = -1;
      std::size_t found = 0;
      run_loop(*suggester, eval, cap, config.seed * 1000003ull + static_cast<std::uint64_t>(s),
               [&](const std::vector<Trial>& trials) {
                 if (landscape.is_target(trials.back().config)) {
                   ++found;
                   if (first < 0) first = static_cast<int>(trials.size());
                 }
                 if (found == n_targets) all = static_cast<int>(trials.size());
                 return found == n_targets;
               });
      // A run that never finds every target counts as needing one more than the cap.
      b.iterations_to_all.push_back(all < 0 ? cap + 1 : all);
      b.iterations_to_first.push_back(first < 0 ? cap + 1 : first);
    }
    b.median_to_all = median(b.iterations_to_all);
    b.median_to_first = median(b.iterations_to_first);
    out.push_back(std::move(b));
  }
  return out;
}

json to_json(const std::vector<SuggesterBench>& bench) {
  json rows = json::array();
  for (const auto& b : bench) {
    rows.push_back({{"algorithm", b.algorithm},
                    {"median_iterations_to_all_targets", b.median_to_all},
                    {"median_iterations_to_first_target", b.median_to_first},
                    {"iterations_to_all_targets", b.iterations_to_all},
                    {"iterations_to_first_target", b.iterations_to_first}});
  }
  return rows;
}

ObjectiveComparison compare_objectives(const RunConfig& config, int iterations) {
  const PlantedLandscape landscape(config.space);
  const MetricFn eval = [&](const ArchitectureConfig& c) { return landscape.evaluate(c); };
  ObjectiveComparison out;
  for (int s = 0; s < config.bench_seeds; ++s) {
    const std::uint64_t seed = config.seed * 1000003ull + static_cast<std::uint64_t>(s);
    BoSuggester multi(config.space, default_objectives(), config.bo);
    BoSuggester acc_only(config.space, {{"mlm_accuracy", true}}, config.bo);
    BoSuggester lat_only(config.space, {{"latency_mean", false}}, config.bo);
    const auto front = pareto_front(run_loop(multi, eval, iterations, seed));
    std::set<std::uint64_t> seen;
    for (auto* single : {&acc_only, &lat_only})
      for (const auto& t : run_loop(*single, eval, iterations, seed)) seen.insert(config.space.encode(t.config));
    int unique = 0;
    for (const auto& t : front) unique += seen.count(config.space.encode(t.config)) == 0;
    out.unique_points.push_back(unique);
    out.seeds_with_unique_points += unique > 0;
    ++out.seeds;
  }
  return out;
}

namespace {

std::uint64_t trial_seed_for(std::uint64_t seed, int architecture, int repeat) {
  auto rng = make_rng({seed, static_cast<std::uint64_t>(architecture), static_cast<std::uint64_t>(repeat), 0x5A5Aull});
  return rng();
}

double distilled_accuracy(const RunConfig& config, const TransformerModel& teacher, const ArchitectureConfig& a,
                          const Schedule& schedule, const SyntheticCorpus& corpus,
                          const std::vector<TokenBatch>& eval_set, std::uint64_t seed) {
  const DistillResult r = distill(a, config.space, teacher, schedule, corpus, seed, config.distill);
  return eval_accuracy(r.student.model, eval_set).mlm_accuracy;
}

}  // namespace

RankStability rank_stability(const RunConfig& config, const TransformerModel& teacher) {
  if (config.architectures.size() < 2) throw std::invalid_argument("rank-stability needs >= 2 architectures");
  const SyntheticCorpus corpus(config.corpus);
  const auto eval_set = corpus.eval_set(config.eval_batches, config.eval_batch_size);
  RankStability r;
  r.architectures = config.architectures;
  r.regular = config.regular;
  r.flash = config.flash;
  for (std::size_t i = 0; i < config.architectures.size(); ++i) {
    const auto& a = config.architectures[i];
    double flash = 0.0, regular = 0.0;
    for (int rep = 0; rep < config.experiment_repeats; ++rep) {
      const std::uint64_t seed = trial_seed_for(config.seed, static_cast<int>(i), rep);
      flash += distilled_accuracy(config, teacher, a, r.flash, corpus, eval_set, seed);
      regular += distilled_accuracy(config, teacher, a, r.regular, corpus, eval_set, seed);
    }
    r.flash_accuracy.push_back(flash / config.experiment_repeats);
    r.regular_accuracy.push_back(regular / config.experiment_repeats);
  }
  r.spearman = spearman(r.flash_accuracy, r.regular_accuracy);
  return r;
}

json to_json(const RankStability& r) {
  json models = json::array();
  for (std::size_t i = 0; i < r.architectures.size(); ++i) {
    models.push_back({{"name", r.architectures[i].name()},
                      {"flash_mlm_accuracy", r.flash_accuracy[i]},
                      {"regular_mlm_accuracy", r.regular_accuracy[i]}});
  }
  return {{"models", models},
          {"spearman", r.spearman},
          {"flash", to_json(r.flash)},
          {"regular", to_json(r.regular)}};
}

FlashScaling flash_scaling(const RunConfig& config, const TransformerModel& teacher) {
  if (config.architectures.empty()) throw std::invalid_argument("flash-scaling needs >= 1 architecture");
  const SyntheticCorpus corpus(config.corpus);
  const auto eval_set = corpus.eval_set(config.eval_batches, config.eval_batch_size);
  const int depth = config.space.depth();
  FlashScaling f;
  f.fractions = config.flash_fractions;
  for (double fraction : config.flash_fractions) {
    const Schedule s = Schedule::flash_from(config.regular, depth, fraction);
    f.total_steps.push_back(s.total(depth));
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < config.architectures.size(); ++i) {
      for (int rep = 0; rep < config.experiment_repeats; ++rep) {
        sum += distilled_accuracy(config, teacher, config.architectures[i], s, corpus, eval_set,
                                  trial_seed_for(config.seed, static_cast<int>(i), rep));
        ++n;
      }
    }
    f.mean_accuracy.push_back(sum / n);
  }
  return f;
}

json to_json(const FlashScaling& f) {
  return {{"fractions", f.fractions}, {"total_steps", f.total_steps}, {"mean_mlm_accuracy", f.mean_accuracy}};
}

}  // namespace flashnas
