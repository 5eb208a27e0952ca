#include "flashnas/config.hpp"

#include <cstdlib>
#include <stdexcept>

#include "flashnas/io.hpp"

namespace flashnas {

using nlohmann::json;

namespace {

Schedule parse_schedule(const json& j, ScheduleMode mode, int depth, const Schedule& fallback) {
  Schedule s = fallback;
  if (j.contains("total_steps")) {
    s = Schedule::from_total(mode, j.at("total_steps").get<int>(), depth, j.value("ratio", 0.48),
                             j.value("warmup_fraction", 0.02));
  }
  s.mode = mode;
  s.steps_per_block = j.value("steps_per_block", s.steps_per_block);
  s.pretrain_steps = j.value("pretrain_steps", s.pretrain_steps);
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  s.ratio = j.value("ratio", s.ratio);
  s.batch_size = j.value("batch_size", fallback.batch_size);
  s.peak_lr = j.value("peak_lr", fallback.peak_lr);
  return s;
}

DesignSpace parse_space(const json& j) {
  const DesignSpace base = DesignSpace::standard();
  std::array<FactorDomain, kNumFactors> domains;
  for (int i = 0; i < kNumFactors; ++i) {
    const Factor f = kFactorOrder[static_cast<std::size_t>(i)];
    domains[static_cast<std::size_t>(i)] = base.domain(f);
    const std::string key(factor_name(f));
    if (j.contains(key)) domains[static_cast<std::size_t>(i)].values = j.at(key).get<std::vector<int>>();
  }
  return DesignSpace(domains, j.value("depth", base.depth()), j.value("vocab_size", base.vocab_size()),
                     j.value("seq_len", base.seq_len()), j.value("embed_dim", base.embed_dim()));
}

}  // namespace

json to_json(const ArchitectureConfig& c) {
  return {{"hidden_size", c.hidden_size},         {"bottleneck_size", c.bottleneck_size},
          {"attention_heads", c.attention_heads}, {"intermediate_size", c.intermediate_size},
          {"stacked_ff", c.stacked_ff},           {"depth", c.depth}};
}

ArchitectureConfig architecture_from_json(const json& j) {
  ArchitectureConfig c;
  c.hidden_size = j.at("hidden_size").get<int>();
  c.bottleneck_size = j.at("bottleneck_size").get<int>();
  c.attention_heads = j.at("attention_heads").get<int>();
  c.intermediate_size = j.at("intermediate_size").get<int>();
  c.stacked_ff = j.at("stacked_ff").get<int>();
  c.depth = j.at("depth").get<int>();
  return c;
}

json to_json(const MetricVector& m) {
  return {{"mlm_accuracy", m.mlm_accuracy}, {"nsp_accuracy", m.nsp_accuracy}, {"latency_mean", m.latency_mean},
          {"latency_std", m.latency_std},   {"param_count", m.param_count}};
}

MetricVector metrics_from_json(const json& j) {
  MetricVector m;
  m.mlm_accuracy = j.value("mlm_accuracy", 0.0);
  m.nsp_accuracy = j.value("nsp_accuracy", 0.0);
  m.latency_mean = j.value("latency_mean", 0.0);
  m.latency_std = j.value("latency_std", 0.0);
  m.param_count = j.value("param_count", std::int64_t{0});
  return m;
}

json to_json(const Schedule& s) {
  return {{"mode", schedule_mode_name(s.mode)}, {"steps_per_block", s.steps_per_block},
          {"pretrain_steps", s.pretrain_steps}, {"warmup_steps", s.warmup_steps},
          {"ratio", s.ratio},                   {"batch_size", s.batch_size},
          {"peak_lr", s.peak_lr}};
}

json to_json(const ModelShape& s) {
  return {{"vocab_size", s.vocab_size},           {"seq_len", s.seq_len},
          {"embed_dim", s.embed_dim},             {"hidden_size", s.hidden_size},
          {"bottleneck_size", s.bottleneck_size}, {"attention_heads", s.attention_heads},
          {"intermediate_size", s.intermediate_size}, {"stacked_ff", s.stacked_ff},
          {"depth", s.depth}};
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  c.source = j;
  c.name = j.value("name", c.name);
  c.output_dir = j.value("output_dir", "runs/" + c.name);
  c.seed = j.value("seed", c.seed);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  if (j.contains("space")) c.space = parse_space(j.at("space"));
  const int depth = c.space.depth();

  if (j.contains("objectives")) {
    c.objectives.clear();
    for (const auto& o : j.at("objectives")) {
      const std::string dir = o.value("direction", "maximize");
      if (dir != "maximize" && dir != "minimize") throw std::invalid_argument("objective direction must be maximize or minimize");
      c.objectives.push_back({o.at("metric").get<std::string>(), dir == "maximize"});
    }
  }
  for (const auto& k : j.value("constraints", json::array())) {
    const std::string dir = k.value("direction", "max");
    if (dir != "max" && dir != "min") throw std::invalid_argument("constraint direction must be max or min");
    c.constraints.push_back({k.at("metric").get<std::string>(), k.at("bound").get<double>(), dir == "max"});
  }

  const json search = j.value("search", json::object());
  c.algorithm = search.value("algorithm", c.algorithm);
  c.bo.n_init = search.value("n_init", c.bo.n_init);
  c.bo.rho = search.value("rho", c.bo.rho);
  c.bo.mc_samples = search.value("mc_samples", c.bo.mc_samples);
  c.firefly.population = search.value("population", c.firefly.population);
  c.firefly.beta0 = search.value("beta0", c.firefly.beta0);
  c.firefly.gamma = search.value("gamma", c.firefly.gamma);
  c.firefly.perturbation = search.value("perturbation", c.firefly.perturbation);

  const std::string evaluator = j.value("evaluator", "distill");
  if (evaluator == "distill") c.evaluator = EvaluatorKind::Distill;
  else if (evaluator == "planted") c.evaluator = EvaluatorKind::Planted;
  else throw std::invalid_argument("evaluator must be distill or planted");

  c.regular = Schedule::regular_default(depth);
  if (j.contains("regular")) c.regular = parse_schedule(j.at("regular"), ScheduleMode::Regular, depth, c.regular);
  c.flash = Schedule::flash_from(c.regular, depth);
  if (j.contains("flash")) {
    const json& f = j.at("flash");
    if (f.contains("fraction")) c.flash = Schedule::flash_from(c.regular, depth, f.at("fraction").get<double>());
    c.flash = parse_schedule(f, ScheduleMode::Flash, depth, c.flash);
  }

  const json d = j.value("distill", json::object());
  c.distill.alpha = d.value("alpha", c.distill.alpha);
  c.distill.head_mismatch = head_mismatch_from_name(d.value("head_mismatch", "match"));
  c.distill.optimizer.kind = optimizer_from_name(d.value("optimizer", "adam"));
  c.distill.report_samples = d.value("report_samples", c.distill.report_samples);

  const json cj = j.value("corpus", json::object());
  c.corpus.seed = cj.value("seed", c.corpus.seed);
  c.corpus.vocab_size = c.space.vocab_size();
  c.corpus.seq_len = c.space.seq_len();
  c.corpus.mask_rate = cj.value("mask_rate", c.corpus.mask_rate);
  c.corpus.nsp_positive_rate = cj.value("nsp_positive_rate", c.corpus.nsp_positive_rate);
  c.corpus.topics = cj.value("topics", c.corpus.topics);
  c.corpus.successors = cj.value("successors", c.corpus.successors);
  c.corpus.concentration = cj.value("concentration", c.corpus.concentration);

  const json lj = j.value("latency", json::object());
  c.latency.mode = latency_mode_from_name(lj.value("mode", "measured"));
  c.latency.batch_size = lj.value("batch_size", c.latency.batch_size);
  c.latency.warmup_runs = lj.value("warmup_runs", c.latency.warmup_runs);
  c.latency.measured_runs = lj.value("measured_runs", c.latency.measured_runs);
  c.latency.analytic.machine_flops = lj.value("machine_flops", c.latency.analytic.machine_flops);
  c.latency.analytic.bandwidth = lj.value("bandwidth", c.latency.analytic.bandwidth);
  c.latency.analytic.kernel_overhead = lj.value("kernel_overhead", c.latency.analytic.kernel_overhead);

  const json tj = j.value("teacher", json::object());
  c.teacher.path = tj.value("path", "");
  ModelShape& ts = c.teacher.shape;
  ts.vocab_size = c.space.vocab_size();
  ts.seq_len = c.space.seq_len();
  ts.embed_dim = tj.value("embed_dim", c.space.embed_dim());
  ts.hidden_size = tj.value("hidden_size", 256);
  ts.bottleneck_size = tj.value("bottleneck_size", 256);
  ts.attention_heads = tj.value("attention_heads", 4);
  ts.intermediate_size = tj.value("intermediate_size", 1024);
  ts.stacked_ff = tj.value("stacked_ff", 1);
  ts.depth = tj.value("depth", depth);
  TeacherTraining& tt = c.teacher.training;
  tt.steps = tj.value("steps", tt.steps);
  tt.batch_size = tj.value("batch_size", tt.batch_size);
  tt.peak_lr = tj.value("peak_lr", tt.peak_lr);
  tt.warmup_steps = tj.value("warmup_steps", tt.warmup_steps);
  tt.seed = tj.value("seed", tt.seed);
  tt.eval_batches = tj.value("eval_batches", tt.eval_batches);

  const json ej = j.value("eval", json::object());
  c.eval_batches = ej.value("batches", c.eval_batches);
  c.eval_batch_size = ej.value("batch_size", c.eval_batch_size);

  const json pj = j.value("promotion", json::object());
  c.promotion_filter = pj.value("filter", c.promotion_filter);
  if (pj.contains("baseline")) c.baseline = metrics_from_json(pj.at("baseline"));

  const json rj = j.value("report", json::object());
  c.reference_accuracy = rj.value("reference_accuracy", c.reference_accuracy);
  if (rj.contains("reference_latency")) c.reference_latency = rj.at("reference_latency").get<double>();

  const json xj = j.value("experiments", json::object());
  c.bench_seeds = xj.value("seeds", c.bench_seeds);
  c.bench_max_iterations = xj.value("max_iterations", c.bench_max_iterations);
  for (const auto& a : xj.value("architectures", json::array()))
    c.architectures.push_back(parse_config_name(a.get<std::string>(), depth));
  if (xj.contains("flash_fractions")) c.flash_fractions = xj.at("flash_fractions").get<std::vector<double>>();
  c.experiment_repeats = xj.value("repeats", c.experiment_repeats);

  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (objectives.empty()) throw std::invalid_argument("objectives must be nonempty");
  for (const auto& o : objectives) metric_value(MetricVector{}, o.metric);
  for (const auto& k : constraints) metric_value(MetricVector{}, k.metric);
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  flash.validate();
  regular.validate();
  latency.validate();
  teacher.shape.validate();
  if (!(distill.alpha >= 0.0 && distill.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (promotion_filter != "pareto" && promotion_filter != "dominates-baseline")
    throw std::invalid_argument("promotion filter must be pareto or dominates-baseline");
  if (promotion_filter == "dominates-baseline" && !baseline)
    throw std::invalid_argument("dominates-baseline promotion needs promotion.baseline");
  if (eval_batches < 1 || eval_batch_size < 1) throw std::invalid_argument("eval batches must be positive");
  for (const auto& a : architectures) space.validate(a);
  for (double f : flash_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("flash fractions must lie in (0, 1]");
  if (bench_seeds < 1 || experiment_repeats < 1) throw std::invalid_argument("experiment counts must be positive");
  make_suggester(algorithm, space, objectives, bo, firefly);
}

std::filesystem::path RunConfig::run_dir() const {
  std::filesystem::path p(output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') p = std::filesystem::path(root) / p;
  }
  return p;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace flashnas
