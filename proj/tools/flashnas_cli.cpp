#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flashnas/config.hpp"
#include "flashnas/experiments.hpp"
#include "flashnas/io.hpp"
#include "flashnas/pipeline.hpp"

namespace fs = std::filesystem;
using namespace flashnas;

namespace {

fs::path prepare(const RunConfig& c) {
  const fs::path dir = c.run_dir();
  fs::create_directories(dir);
  return dir;
}

void save(const fs::path& p, const nlohmann::json& j) {
  write_file_atomic(p, j.dump(2) + "\n");
  std::cout << "wrote " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashnas: multi-objective architecture search with flash distillation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  int stop_after = -1;
  bool fresh = false;
  std::string filter;

  auto* search = app.add_subcommand("search", "run (or resume) a search described by a config file");
  search->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
  search->add_option("--stop-after", stop_after, "stop once this many trials are logged (crash simulation)");
  search->add_flag("--fresh", fresh, "discard an existing trial log instead of resuming");

  auto* promote_cmd = app.add_subcommand("promote", "regular distillation of the Pareto models of a run");
  promote_cmd->add_option("run_dir", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  promote_cmd->add_option("--filter", filter, "pareto | dominates-baseline")
      ->check(CLI::IsMember({"pareto", "dominates-baseline"}));

  auto* report_cmd = app.add_subcommand("report", "write trials.csv, pareto.csv and summary.json");
  report_cmd->add_option("run_dir", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* bench = app.add_subcommand("bench-suggesters", "BO / random / firefly on the planted landscape");
  bench->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);

  auto* rank = app.add_subcommand("rank-stability", "flash vs regular accuracy ranks of fixed architectures");
  rank->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);

  auto* scaling = app.add_subcommand("flash-scaling", "accuracy against the flash step budget");
  scaling->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare-objectives", "multi- vs single-objective fronts on the planted landscape");
  compare->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*search) {
      const RunConfig c = load_run_config(config_path);
      const RunState s = run_search(c, {stop_after, fresh});
      std::cout << "run " << s.run_dir.string() << ": " << s.trials.size() << " trials, front " << s.front.size()
                << ", phase " << s.phase << "\n";
      for (const auto& t : s.front) {
        std::printf("  #%d %s acc=%.4f lat=%.6g\n", t.trial_id, t.config.name().c_str(), t.metrics.mlm_accuracy,
                    t.metrics.latency_mean);
      }
    } else if (*promote_cmd) {
      const PromoteSummary p = promote(run_dir, filter.empty() ? std::nullopt : std::optional<std::string>(filter));
      for (const auto& m : p.models) {
        if (m.ok) {
          std::printf("  #%d %s flash=%.4f regular=%.4f\n", m.flash.trial_id, m.flash.config.name().c_str(),
                      m.flash.metrics.mlm_accuracy, m.regular.mlm_accuracy);
        } else {
          std::printf("  #%d %s failed: %s\n", m.flash.trial_id, m.flash.config.name().c_str(), m.error.c_str());
        }
      }
      std::cout << "promoted " << p.models.size() << " models";
      if (p.spearman) std::cout << ", spearman " << *p.spearman;
      std::cout << "\n";
    } else if (*report_cmd) {
      std::cout << report(run_dir).dump(2) << "\n";
    } else if (*bench) {
      const RunConfig c = load_run_config(config_path);
      const auto rows = bench_suggesters(c);
      for (const auto& r : rows)
        std::printf("  %-8s median to all targets %.1f, to first %.1f\n", r.algorithm.c_str(), r.median_to_all,
                    r.median_to_first);
      save(prepare(c) / "bench_suggesters.json", to_json(rows));
    } else if (*rank) {
      const RunConfig c = load_run_config(config_path);
      const fs::path dir = prepare(c);
      const Teacher teacher = obtain_teacher(c, dir);
      const RankStability r = rank_stability(c, teacher.model);
      for (std::size_t i = 0; i < r.architectures.size(); ++i)
        std::printf("  %s flash=%.4f regular=%.4f\n", r.architectures[i].name().c_str(), r.flash_accuracy[i],
                    r.regular_accuracy[i]);
      std::printf("spearman %.4f\n", r.spearman);
      save(dir / "rank_stability.json", to_json(r));
    } else if (*scaling) {
      const RunConfig c = load_run_config(config_path);
      const fs::path dir = prepare(c);
      const Teacher teacher = obtain_teacher(c, dir);
      const FlashScaling f = flash_scaling(c, teacher.model);
      for (std::size_t i = 0; i < f.fractions.size(); ++i)
        std::printf("  %6.2f%% (%d steps) acc=%.4f\n", 100.0 * f.fractions[i], f.total_steps[i], f.mean_accuracy[i]);
      save(dir / "flash_scaling.json", to_json(f));
    } else if (*compare) {
      const RunConfig c = load_run_config(config_path);
      const ObjectiveComparison o = compare_objectives(c);
      std::printf("seeds with front points unseen by single-objective runs: %d / %d\n", o.seeds_with_unique_points,
                  o.seeds);
      save(prepare(c) / "compare_objectives.json",
           {{"seeds", o.seeds}, {"seeds_with_unique_points", o.seeds_with_unique_points},
            {"unique_points", o.unique_points}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
