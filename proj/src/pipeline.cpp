#include "flashnas/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "flashnas/io.hpp"
#include "flashnas/pareto.hpp"
#include "flashnas/stats.hpp"

namespace flashnas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTrialLog = "trials.jsonl";
constexpr const char* kTimingLog = "timings.jsonl";
constexpr const char* kDiagnosticsLog = "search_diagnostics.jsonl";

std::mt19937_64 iteration_rng(std::uint64_t seed, int iteration) {
  return make_rng({seed, static_cast<std::uint64_t>(iteration), 0x5E4Cull});
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

json report_json(const DistillLossReport& r) {
  return {{"step", r.step}, {"total", r.total}, {"mlm", r.mlm}, {"mlm_distill", r.mlm_distill},
          {"nsp", r.nsp},   {"alpha", r.alpha}, {"mha", r.mha}, {"fm", r.fm}};
}

json history_json(const DistillHistory& h) {
  json stages = json::array();
  for (const auto& s : h.stages) stages.push_back({{"block", s.block}, {"losses", s.losses}});
  json reports = json::array();
  for (const auto& r : h.reports) reports.push_back(report_json(r));
  return {{"stages", stages}, {"pretrain_reports", reports}};
}

std::vector<std::string> first_lines(const fs::path& p, std::size_t n) {
  if (!fs::exists(p)) return {};
  auto lines = read_lines(p);
  if (lines.size() > n) lines.resize(n);
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DistillEvaluator::DistillEvaluator(const RunConfig& config, const TransformerModel& teacher, Schedule schedule)
    : config_(config),
      teacher_(teacher),
      schedule_(schedule),
      corpus_(config.corpus),
      eval_set_(corpus_.eval_set(config.eval_batches, config.eval_batch_size)),
      latency_(make_latency_provider(config.latency)) {}

EvalOutcome DistillEvaluator::evaluate(const ArchitectureConfig& c, std::uint64_t seed) {
  DistillResult r = distill(c, config_.space, teacher_, schedule_, corpus_, seed, config_.distill);
  EvalOutcome out;
  const AccuracyReport acc = eval_accuracy(r.student.model, eval_set_);
  const LatencyReport lat = latency_->latency(r.student.model);
  out.metrics.mlm_accuracy = acc.mlm_accuracy;
  out.metrics.nsp_accuracy = acc.nsp_accuracy;
  out.metrics.latency_mean = lat.mean;
  out.metrics.latency_std = lat.std;
  out.metrics.param_count = param_count(c, config_.space);
  if (out.metrics.param_count != r.student.model.backbone_param_count())
    throw std::logic_error("model parameter count disagrees with the analytic count for " + c.name());
  out.details = history_json(r.history);
  out.details["latency_provider"] = latency_->name();
  if (lat.resolution_warning) out.details["latency_resolution_warning"] = true;
  last_ = std::make_unique<Student>(std::move(r.student));
  return out;
}

Teacher obtain_teacher(const RunConfig& config, const fs::path& run_dir) {
  const TeacherSource& src = config.teacher;
  const json key_doc = {{"shape", to_json(src.shape)},
                        {"training",
                         {{"steps", src.training.steps},
                          {"batch_size", src.training.batch_size},
                          {"peak_lr", src.training.peak_lr},
                          {"warmup_steps", src.training.warmup_steps},
                          {"seed", src.training.seed},
                          {"eval_batches", src.training.eval_batches}}},
                        {"corpus", config.source.value("corpus", json::object())},
                        {"vocab_size", config.corpus.vocab_size},
                        {"seq_len", config.corpus.seq_len}};
  const std::string key = hex64(fnv1a(key_doc.dump()));

  const fs::path dir = src.path.empty() ? run_dir / "teacher" : fs::path(src.path);
  const fs::path manifest_path = dir / "manifest.json";
  const fs::path params_path = dir / "params.bin";
  const SyntheticCorpus corpus(config.corpus);

  if (fs::exists(manifest_path) && fs::exists(params_path)) {
    const json m = json::parse(read_file(manifest_path));
    if (!src.path.empty() || m.value("key", "") == key) {
      Teacher t{TransformerModel(src.shape, src.training.seed), {}};
      t.model.params().load(params_path);
      t.manifest.shape = src.shape;
      t.manifest.training = src.training;
      t.manifest.mlm_accuracy = m.value("mlm_accuracy", 0.0);
      t.manifest.nsp_accuracy = m.value("nsp_accuracy", 0.0);
      t.manifest.oracle_accuracy = m.value("oracle_accuracy", 0.0);
      t.manifest.target_accuracy = m.value("target_accuracy", 0.0);
      t.manifest.reached_target = m.value("reached_target", false);
      if (!t.manifest.reached_target) throw std::runtime_error("cached teacher did not reach its accuracy target");
      return t;
    }
  }
  if (!src.path.empty()) throw std::runtime_error("teacher snapshot not found in " + dir.string());

  Teacher t = train_teacher(src.shape, corpus, src.training);
  const json manifest = {{"format", "flashnas-teacher"},
                         {"version", 1},
                         {"key", key},
                         {"shape", to_json(t.manifest.shape)},
                         {"training", key_doc["training"]},
                         {"mlm_accuracy", t.manifest.mlm_accuracy},
                         {"nsp_accuracy", t.manifest.nsp_accuracy},
                         {"oracle_accuracy", t.manifest.oracle_accuracy},
                         {"target_accuracy", t.manifest.target_accuracy},
                         {"reached_target", t.manifest.reached_target}};
  t.model.params().save(params_path);
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  if (!t.manifest.reached_target) {
    throw std::runtime_error("teacher MLM accuracy " + fmt(t.manifest.mlm_accuracy) + " is below the target " +
                             fmt(t.manifest.target_accuracy));
  }
  return t;
}

std::uint64_t trial_seed(std::uint64_t run_seed, int trial_id) {
  auto rng = make_rng({run_seed, static_cast<std::uint64_t>(trial_id), 0x7121ull});
  return rng();
}

json trial_to_json(const Trial& t, const json& details) {
  return {{"schema_version", kTrialLogVersion},
          {"trial_id", t.trial_id},
          {"name", t.config.name()},
          {"config", to_json(t.config)},
          {"status", trial_status_name(t.status)},
          {"feasible", t.feasible},
          {"seed", t.seed},
          {"schedule_mode", t.schedule_mode},
          {"metrics", to_json(t.metrics)},
          {"error", t.error},
          {"details", details}};
}

Trial trial_from_json(const json& j) {
  if (j.value("schema_version", 0) != kTrialLogVersion) throw std::runtime_error("unsupported trial log schema");
  Trial t;
  t.trial_id = j.at("trial_id").get<int>();
  t.config = architecture_from_json(j.at("config"));
  t.status = trial_status_from_name(j.at("status").get<std::string>());
  t.feasible = j.value("feasible", true);
  t.seed = j.at("seed").get<std::uint64_t>();
  t.schedule_mode = j.value("schedule_mode", "flash");
  t.metrics = metrics_from_json(j.at("metrics"));
  t.error = j.value("error", "");
  return t;
}

std::vector<Trial> read_trial_log(const fs::path& path) {
  std::vector<Trial> out;
  if (!fs::exists(path)) return out;
  for (const auto& line : read_lines(path)) out.push_back(trial_from_json(json::parse(line)));
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].trial_id != static_cast<int>(i)) throw std::runtime_error("trial log ids are not consecutive");
  return out;
}

RunConfig load_run_dir_config(const fs::path& run_dir) {
  const fs::path p = run_dir / "config.json";
  if (!fs::exists(p)) throw std::runtime_error(run_dir.string() + " is not a run directory (no config.json)");
  return load_run_config(p);
}

RunState run_search(const RunConfig& config, const SearchOptions& options) {
  RunState state;
  state.run_dir = config.run_dir();
  const fs::path& dir = state.run_dir;
  fs::create_directories(dir);
  const fs::path log_path = dir / kTrialLog;
  const fs::path timing_path = dir / kTimingLog;
  const fs::path diag_path = dir / kDiagnosticsLog;
  const std::string config_text = config.source.dump(2) + "\n";

  if (options.fresh) {
    for (const auto& p : {log_path, timing_path, diag_path, dir / "state.json"}) fs::remove(p);
  } else if (fs::exists(dir / "config.json") && fs::exists(log_path) &&
             json::parse(read_file(dir / "config.json")) != config.source) {
    throw std::runtime_error("run directory " + dir.string() + " holds a different config; rerun with --fresh");
  }
  write_file_atomic(dir / "config.json", config_text);

  state.trials = read_trial_log(log_path);
  const std::size_t done = state.trials.size();
  std::vector<std::string> log_lines = first_lines(log_path, done);
  std::vector<std::string> timing_lines = first_lines(timing_path, done);
  std::vector<std::string> diag_lines = first_lines(diag_path, done);

  auto suggester = make_suggester(config.algorithm, config.space, config.objectives, config.bo, config.firefly);
  if (suggester->stateful()) {
    std::vector<Trial> prefix;
    for (std::size_t i = 0; i < done; ++i) {
      auto rng = iteration_rng(config.seed, static_cast<int>(i));
      if (suggester->suggest(prefix, rng) != state.trials[i].config)
        throw std::runtime_error("resume replay diverged at trial " + std::to_string(i));
      prefix.push_back(state.trials[i]);
    }
  }

  std::unique_ptr<Teacher> teacher;
  std::unique_ptr<Evaluator> evaluator;
  auto ensure_evaluator = [&] {
    if (evaluator) return;
    if (config.evaluator == EvaluatorKind::Planted) {
      evaluator = std::make_unique<PlantedEvaluator>(config.space);
    } else {
      teacher = std::make_unique<Teacher>(obtain_teacher(config, dir));
      evaluator = std::make_unique<DistillEvaluator>(config, teacher->model, config.flash);
    }
  };

  bool finished = true;
  for (int i = static_cast<int>(done); i < config.max_iterations; ++i) {
    if (options.stop_after >= 0 && i >= options.stop_after) {
      finished = false;
      break;
    }
    auto rng = iteration_rng(config.seed, i);
    ArchitectureConfig candidate;
    try {
      candidate = suggester->suggest(state.trials, rng);
    } catch (const SpaceExhausted&) {
      break;
    }
    ensure_evaluator();

    Trial t;
    t.trial_id = i;
    t.config = candidate;
    t.seed = trial_seed(config.seed, i);
    t.schedule_mode = std::string(schedule_mode_name(config.flash.mode));
    json details = json::object();
    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      EvalOutcome out = evaluator->evaluate(candidate, t.seed);
      t.metrics = out.metrics;
      t.status = TrialStatus::Done;
      details = std::move(out.details);
      for (const auto& k : config.constraints) t.feasible = t.feasible && k.satisfied(t.metrics);
    } catch (const TrialFailure& e) {
      t.status = TrialStatus::Failed;
      t.error = e.what();
    } catch (const NonFiniteError& e) {
      t.status = TrialStatus::Failed;
      t.error = e.what();
    }
    t.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.trials.push_back(t);

    log_lines.push_back(trial_to_json(t, details).dump());
    write_file_atomic(log_path, join_lines(log_lines));

    const SuggestDiagnostics& d = suggester->diagnostics();
    diag_lines.push_back(json{{"iteration", i},
                              {"trial_id", i},
                              {"algorithm", d.algorithm},
                              {"reason", d.reason},
                              {"candidates", d.candidates},
                              {"acquisition", d.acquisition},
                              {"weights", d.weights},
                              {"lengthscales", d.lengthscales},
                              {"noise", d.noise},
                              {"generations", d.generations},
                              {"name", candidate.name()}}
                             .dump());
    write_file_atomic(diag_path, join_lines(diag_lines));

    const double unix_time = std::chrono::duration<double>(started.time_since_epoch()).count();
    timing_lines.push_back(json{{"trial_id", i}, {"started_unix", unix_time}, {"wall_time", t.wall_time}}.dump());
    write_file_atomic(timing_path, join_lines(timing_lines));
  }

  state.front = pareto_front(state.trials, config.objectives);
  state.phase = finished ? "done" : "exploring";
  json front_ids = json::array();
  for (const auto& t : state.front) front_ids.push_back(t.trial_id);
  write_file_atomic(dir / "state.json",
                    json{{"phase", state.phase}, {"trials", state.trials.size()}, {"front", front_ids}}.dump(2) + "\n");
  return state;
}

RunState load_state(const fs::path& run_dir) {
  const RunConfig config = load_run_dir_config(run_dir);
  RunState state;
  state.run_dir = run_dir;
  state.trials = read_trial_log(run_dir / kTrialLog);
  state.front = pareto_front(state.trials, config.objectives);
  if (fs::exists(run_dir / "state.json")) {
    state.phase = json::parse(read_file(run_dir / "state.json")).value("phase", "exploring");
  } else {
    state.phase = static_cast<int>(state.trials.size()) >= config.max_iterations ? "done" : "exploring";
  }
  return state;
}

PromoteSummary promote(const fs::path& run_dir, const std::optional<std::string>& filter) {
  RunConfig config = load_run_dir_config(run_dir);
  if (filter) {
    config.promotion_filter = *filter;
    config.validate();
  }
  const RunState state = load_state(run_dir);
  PromoteSummary summary;
  std::vector<Trial> selected;
  for (const auto& t : state.front)
    if (config.promotion_filter == "pareto" || dominates(t.metrics, *config.baseline)) selected.push_back(t);

  json models = json::array();
  if (!selected.empty()) {
    if (config.evaluator != EvaluatorKind::Distill)
      throw std::runtime_error("promotion needs the distill evaluator; this run used the planted landscape");
    const Teacher teacher = obtain_teacher(config, run_dir);
    DistillEvaluator evaluator(config, teacher.model, config.regular);
    for (const auto& t : selected) {
      PromotedModel p;
      p.flash = t;
      json entry = {{"trial_id", t.trial_id}, {"name", t.config.name()}, {"flash", to_json(t.metrics)}};
      try {
        const EvalOutcome out = evaluator.evaluate(t.config, t.seed);
        p.regular = out.metrics;
        p.snapshot = run_dir / "promoted" / (std::to_string(t.trial_id) + "_" + t.config.name() + ".params");
        evaluator.last_student()->model.params().save(p.snapshot);
        p.ok = true;
        entry["regular"] = to_json(p.regular);
        entry["snapshot"] = p.snapshot.filename().string();
        entry["regular_at_least_flash"] = p.regular.mlm_accuracy >= t.metrics.mlm_accuracy;
        summary.regular_at_least_flash += p.regular.mlm_accuracy >= t.metrics.mlm_accuracy;
      } catch (const std::exception& e) {
        p.error = e.what();
        entry["error"] = p.error;
      }
      entry["status"] = p.ok ? "done" : "failed";
      models.push_back(entry);
      summary.models.push_back(std::move(p));
    }
  }

  std::vector<double> flash_acc, regular_acc;
  for (const auto& p : summary.models) {
    if (!p.ok) continue;
    flash_acc.push_back(p.flash.metrics.mlm_accuracy);
    regular_acc.push_back(p.regular.mlm_accuracy);
  }
  if (flash_acc.size() >= 2) summary.spearman = spearman(flash_acc, regular_acc);
  json doc = {{"filter", config.promotion_filter},
              {"models", models},
              {"regular_at_least_flash", summary.regular_at_least_flash},
              {"spearman_flash_vs_regular", summary.spearman ? json(*summary.spearman) : json(nullptr)}};
  write_file_atomic(run_dir / "promoted.json", doc.dump(2) + "\n");
  return summary;
}

const char* const kTrialCsvHeader =
    "trial_id,name,hidden_size,bottleneck_size,attention_heads,intermediate_size,stacked_ff,depth,status,feasible,"
    "schedule_mode,seed,mlm_accuracy,nsp_accuracy,latency_mean,latency_std,param_count";

std::string trial_csv_row(const Trial& t) {
  std::ostringstream s;
  const auto& c = t.config;
  s << t.trial_id << ',' << c.name() << ',' << c.hidden_size << ',' << c.bottleneck_size << ',' << c.attention_heads
    << ',' << c.intermediate_size << ',' << c.stacked_ff << ',' << c.depth << ',' << trial_status_name(t.status) << ','
    << (t.feasible ? "true" : "false") << ',' << t.schedule_mode << ',' << t.seed << ',' << fmt(t.metrics.mlm_accuracy)
    << ',' << fmt(t.metrics.nsp_accuracy) << ',' << fmt(t.metrics.latency_mean) << ',' << fmt(t.metrics.latency_std)
    << ',' << t.metrics.param_count;
  return s.str();
}

json report(const fs::path& run_dir) {
  const RunConfig config = load_run_dir_config(run_dir);
  const RunState state = load_state(run_dir);

  std::string trials_csv = std::string(kTrialCsvHeader) + "\n";
  for (const auto& t : state.trials) trials_csv += trial_csv_row(t) + "\n";
  std::string pareto_csv = std::string(kTrialCsvHeader) + "\n";
  for (const auto& t : state.front) pareto_csv += trial_csv_row(t) + "\n";
  write_file_atomic(run_dir / "trials.csv", trials_csv);
  write_file_atomic(run_dir / "pareto.csv", pareto_csv);

  int done = 0, failed = 0, infeasible = 0;
  double max_latency = 0.0;
  for (const auto& t : state.trials) {
    if (t.status == TrialStatus::Done) {
      ++done;
      if (!t.feasible) ++infeasible;
      max_latency = std::max(max_latency, t.metrics.latency_mean);
    }
    if (t.status == TrialStatus::Failed) ++failed;
  }
  const double ref_latency = config.reference_latency.value_or(1.1 * max_latency);
  std::vector<FrontPoint> points;
  for (const auto& t : pareto_front(state.trials)) points.push_back({t.metrics.mlm_accuracy, t.metrics.latency_mean});

  json first_dominating = nullptr;
  if (config.baseline) {
    for (const auto& t : state.trials) {
      if (t.usable() && dominates(t.metrics, *config.baseline)) {
        first_dominating = t.trial_id + 1;
        break;
      }
    }
  }
  json front_ids = json::array();
  for (const auto& t : state.front) front_ids.push_back(t.trial_id);
  json summary = {{"schema_version", 1},
                  {"csv_version", kCsvVersion},
                  {"name", config.name},
                  {"phase", state.phase},
                  {"trials", state.trials.size()},
                  {"done", done},
                  {"failed", failed},
                  {"infeasible", infeasible},
                  {"front_size", state.front.size()},
                  {"front_trial_ids", front_ids},
                  {"hypervolume", hypervolume_2d(points, config.reference_accuracy, ref_latency)},
                  {"reference_point", {{"mlm_accuracy", config.reference_accuracy}, {"latency_mean", ref_latency}}},
                  {"iterations_to_first_dominating_trial", first_dominating},
                  {"baseline", config.baseline ? to_json(*config.baseline) : json(nullptr)}};
  write_file_atomic(run_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace flashnas
