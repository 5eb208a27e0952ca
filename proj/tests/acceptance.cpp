// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flashnas/archspace.hpp"
#include "flashnas/distill.hpp"
#include "flashnas/experiments.hpp"
#include "flashnas/gp.hpp"
#include "flashnas/gradcheck.hpp"
#include "flashnas/io.hpp"
#include "flashnas/losses.hpp"
#include "flashnas/pareto.hpp"
#include "flashnas/pipeline.hpp"

using namespace flashnas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

fs::path work_dir() {
  const char* root = std::getenv(kOutputRootEnv);
  const fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::temp_directory_path();
  return base / "flashnas_acceptance";
}

json desk_config(const std::string& name) {
  return {{"name", name},
          {"output_dir", (work_dir() / name).string()},
          {"seed", 1},
          {"max_iterations", 50},
          {"space",
           {{"hidden_size", {32, 48, 64, 96}},
            {"bottleneck_size", {16, 32, 48, 64}},
            {"attention_heads", {1, 2, 4, 8}},
            {"intermediate_size", {64, 96, 128}},
            {"stacked_ff", {1, 2, 3}},
            {"depth", 2},
            {"vocab_size", 64},
            {"seq_len", 16},
            {"embed_dim", 32}}},
          {"teacher", {{"hidden_size", 64}, {"bottleneck_size", 64}, {"attention_heads", 4}, {"intermediate_size", 128}}},
          {"regular", {{"total_steps", 2000}, {"batch_size", 16}, {"peak_lr", 0.003}}},
          {"flash", {{"fraction", 0.05}}},
          {"latency", {{"mode", "analytic"}}},
          {"experiments",
           {{"seeds", 20},
            {"architectures",
             {"Model_32_16_1_64_1", "Model_48_32_2_96_1", "Model_64_48_4_128_2", "Model_96_64_8_128_3",
              "Model_32_32_4_128_2", "Model_64_16_2_64_1", "Model_96_48_1_96_2", "Model_48_64_8_64_3"}}}}};
}

AttentionTensor random_attention(int batch, int heads, int seq, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 2.0);
  Matrix logits(static_cast<Eigen::Index>(batch) * heads * seq, seq);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = n(rng);
  return {nn::softmax_rows(logits), batch, heads, seq};
}

Outcome loss_correctness() {
  auto rng = make_rng({101});
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0.0;
  bool nonneg = true, zero_iff_equal = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int b = dim(rng), h = dim(rng), s = dim(rng) + 1;
    const auto st = random_attention(b, h, s, rng);
    const auto te = random_attention(b, h, s, rng);
    double oracle = 0.0;
    for (int bi = 0; bi < b; ++bi) {
      double acc = 0.0;
      for (int hi = 0; hi < h; ++hi)
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < s; ++j) {
            const int r = (bi * h + hi) * s + i;
            const double p = te.rows(r, j);
            if (p > 0.0) acc += p * std::log(p / std::max(st.rows(r, j), 1e-12));
          }
      oracle += acc / (s * h);
    }
    oracle /= b;
    const double got = mha_loss(st, te);
    worst = std::max(worst, std::abs(got - oracle) / std::max(1.0, std::abs(oracle)));
    nonneg = nonneg && got >= 0.0;
    zero_iff_equal = zero_iff_equal && mha_loss(te, te) == 0.0 && got > 0.0;

    Matrix fs_(dim(rng) + 1, dim(rng) + 1), ft(fs_.rows(), fs_.cols());
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < fs_.size(); ++i) {
      fs_.data()[i] = n(rng);
      ft.data()[i] = n(rng);
    }
    double fm = 0.0;
    for (Eigen::Index i = 0; i < fs_.rows(); ++i)
      for (Eigen::Index j = 0; j < fs_.cols(); ++j) fm += (ft(i, j) - fs_(i, j)) * (ft(i, j) - fs_(i, j));
    fm /= static_cast<double>(fs_.size());
    worst = std::max(worst, std::abs(fm_loss(fs_, ft) - fm) / std::max(1.0, fm));
  }
  return {worst <= 1e-12 && nonneg && zero_iff_equal,
          "max rel err " + num(worst) + ", KL>=0 " + (nonneg ? "yes" : "no") + ", zero-iff-equal " +
              (zero_iff_equal ? "yes" : "no")};
}

ModelShape small_teacher_shape() {
  ModelShape s;
  s.embed_dim = 16;
  s.hidden_size = 32;
  s.bottleneck_size = 16;
  s.attention_heads = 2;
  s.intermediate_size = 32;
  s.depth = 2;
  return s;
}

DesignSpace small_space(int depth, int embed) {
  return DesignSpace({FactorDomain{Factor::HiddenSize, {8, 16, 32}}, FactorDomain{Factor::BottleneckSize, {4, 8, 16}},
                      FactorDomain{Factor::AttentionHeads, {1, 2, 4}}, FactorDomain{Factor::IntermediateSize, {16, 32}},
                      FactorDomain{Factor::StackedFF, {1, 2}}},
                     depth, 64, 16, embed);
}

Outcome loss_structure() {
  const SyntheticCorpus corpus(CorpusConfig{});
  const TransformerModel teacher(small_teacher_shape(), 1);
  Student s = build_student({16, 8, 2, 16, 1, 2}, small_space(2, 16), teacher, 2);
  auto rng = make_rng({3});
  bool ok = true;
  double worst = 0.0;
  for (int b = 0; b < 5; ++b) {
    const TokenBatch batch = corpus.next_batch(Split::Train, rng, 8);
    Tape t0, t1;
    const auto r0 = pretrain_loss(t0, batch, s, teacher, 0.0);
    const auto r1 = pretrain_loss(t1, batch, s, teacher, 1.0);
    ok = ok && r0.total == r0.mlm_distill + r0.nsp && r1.total == r1.mlm + r1.nsp;
    for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      Tape t;
      const auto r = pretrain_loss(t, batch, s, teacher, a);
      worst = std::max(worst, std::abs(r.total - ((1.0 - a) * r0.total + a * r1.total)) / std::abs(r.total));
    }
  }
  ok = ok && worst <= 1e-12;
  return {ok, "endpoints exact " + std::string(ok ? "yes" : "no") + ", max affine deviation " + num(worst)};
}

Outcome gradients() {
  const SyntheticCorpus corpus(CorpusConfig{});
  const TransformerModel teacher(small_teacher_shape(), 4);
  auto rng = make_rng({5});
  const TokenBatch batch = corpus.next_batch(Split::Train, rng, 2);
  const DistillOptions options;
  Student s = build_student({8, 4, 2, 16, 1, 1}, small_space(1, 8), teacher, 6);
  std::vector<ParamStore*> stores{&s.model.params(), &s.adapters};
  const auto mha = grad_check(
      stores, [&](Tape& t) { return transfer_loss(t, batch, s, teacher, 1, options, nullptr, TransferPart::Attention); },
      1e-4);
  const auto fm = grad_check(
      stores, [&](Tape& t) { return transfer_loss(t, batch, s, teacher, 1, options, nullptr, TransferPart::Features); },
      1e-4);
  const auto ld = grad_check(
      s.model.params(),
      [&](Tape& t) {
        Var loss;
        pretrain_loss(t, batch, s, teacher, 0.5, &loss);
        return loss;
      },
      1e-4);
  return {mha.passed && fm.passed && ld.passed, "L_MHA " + num(mha.max_error) + ", L_FM " + num(fm.max_error) +
                                                    ", L_D " + num(ld.max_error) + " (" + num(ld.checked) + " scalars)"};
}

Outcome progressive_freezing() {
  const SyntheticCorpus corpus(CorpusConfig{});
  ModelShape ts = small_teacher_shape();
  ts.depth = 4;
  const TransformerModel teacher(ts, 7);
  Student s = build_student({16, 8, 2, 16, 1, 4}, small_space(4, 16), teacher, 8);
  std::vector<std::uint64_t> before;
  for (int j = 1; j <= 4; ++j) before.push_back(s.model.params().hash(TransformerModel::block_prefix(j)));
  Schedule schedule;
  schedule.steps_per_block = 5;
  schedule.pretrain_steps = 0;
  schedule.batch_size = 4;
  auto rng = make_rng({9});
  DistillHistory history;
  progressive_transfer(s, teacher, schedule, corpus, rng, {}, history);
  bool ok = history.stages.size() == 4;
  for (int k = 1; k <= 4 && ok; ++k) {
    const auto& prev = k == 1 ? before : history.stages[static_cast<std::size_t>(k - 2)].block_hashes;
    const auto& now = history.stages[static_cast<std::size_t>(k - 1)].block_hashes;
    for (int j = 1; j <= 4; ++j) {
      const bool same = prev[static_cast<std::size_t>(j - 1)] == now[static_cast<std::size_t>(j - 1)];
      ok = ok && (j == k ? !same : same);
    }
  }
  return {ok, ok ? "frozen blocks unchanged at every stage" : "a frozen block changed or the trained block did not"};
}

Outcome pareto_oracle() {
  auto rng = make_rng({11});
  std::uniform_int_distribution<int> size(1, 500);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(1, 10);
  int mismatches = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = inst == 0 ? 500 : size(rng);
    std::vector<Trial> trials;
    for (int i = 0; i < n; ++i) {
      Trial t;
      t.trial_id = i;
      t.status = TrialStatus::Done;
      const bool coarse = inst % 2 == 1;
      t.metrics.mlm_accuracy = coarse ? grid(rng) / 10.0 : u(rng);
      t.metrics.latency_mean = coarse ? grid(rng) / 10.0 : 0.01 + u(rng);
      trials.push_back(t);
    }
    std::set<int> scan;
    for (const auto& a : trials) {
      bool keep = true;
      for (const auto& b : trials) {
        if (a.trial_id == b.trial_id) continue;
        const bool ge = b.metrics.mlm_accuracy >= a.metrics.mlm_accuracy && b.metrics.latency_mean <= a.metrics.latency_mean;
        const bool strict = b.metrics.mlm_accuracy > a.metrics.mlm_accuracy || b.metrics.latency_mean < a.metrics.latency_mean;
        if (ge && (strict || b.trial_id < a.trial_id)) keep = false;
      }
      if (keep) scan.insert(a.trial_id);
    }
    std::set<int> got;
    for (const auto& t : pareto_front(trials)) got.insert(t.trial_id);
    mismatches += got != scan;
  }
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<FrontPoint> pts;
    const int n = 1 + inst % 10;
    for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
    std::vector<double> xs{0.0}, ys{1.0};
    for (const auto& p : pts) {
      xs.push_back(p.accuracy);
      ys.push_back(p.latency);
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
      for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
        const double cx = 0.5 * (xs[i] + xs[i + 1]), cy = 0.5 * (ys[j] + ys[j + 1]);
        bool covered = false;
        for (const auto& p : pts) covered = covered || (cx <= p.accuracy && cy >= p.latency && cy <= 1.0);
        if (covered) area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
      }
    worst = std::max(worst, std::abs(hypervolume_2d(pts, 0.0, 1.0) - area));
  }
  return {mismatches == 0 && worst <= 1e-12,
          num(mismatches) + " front mismatches over 50 instances, max hypervolume error " + num(worst)};
}

Outcome gp_sanity() {
  using GP = GaussianProcess<double>;
  auto rng = make_rng({13});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GP::Mat x(20, 5);
  GP::Vec y(20);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::cos(4.0 * x(i, 0)) + x(i, 2) * x(i, 3);
  GP gp;
  gp.fit(x, y, {0.5, 1.0, 1e-10});
  const double interp = (gp.posterior(x).first - y).cwiseAbs().maxCoeff();

  gp.fit(x, y, {0.3, 2.0, 1e-6});
  const double prior = gp.posterior_at(GP::Vec::Constant(5, 40.0)).second;
  const double reversion = std::abs(prior - 2.0) / 2.0;

  GP::Mat xs(20, 1);
  GP::Vec ys(20);
  for (int i = 0; i < 20; ++i) {
    xs(i, 0) = i / 19.0;
    ys(i) = std::sin(2.0 * M_PI * xs(i, 0));
  }
  gp.fit_grid(xs, ys);
  double se = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double q = (i + 0.5) / 100.0;
    const double d = gp.posterior_at(GP::Vec::Constant(1, q)).first - std::sin(2.0 * M_PI * q);
    se += d * d;
  }
  const double rmse = std::sqrt(se / 100.0);
  return {interp <= 1e-6 && reversion <= 0.01 && rmse < 0.1,
          "interpolation " + num(interp) + ", prior reversion " + num(reversion) + ", sine RMSE " + num(rmse)};
}

Outcome search_efficiency(const RunConfig& c) {
  const auto bench = bench_suggesters(c);
  const auto& bo = bench[0];
  const auto& rnd = bench[1];
  const auto& ff = bench[2];
  const bool ok = bo.median_to_all < rnd.median_to_all && bo.median_to_all < ff.median_to_all &&
                  bo.median_to_first < rnd.median_to_first && bo.median_to_first < ff.median_to_first;
  return {ok, "median to all targets bo " + num(bo.median_to_all) + " random " + num(rnd.median_to_all) + " firefly " +
                  num(ff.median_to_all) + "; to first bo " + num(bo.median_to_first) + " random " +
                  num(rnd.median_to_first) + " firefly " + num(ff.median_to_first)};
}

Outcome rank_stability_echo(const RunConfig& c, const TransformerModel& teacher) {
  const int depth = c.space.depth();
  const bool budgets = c.regular.total(depth) == 2000 && c.flash.total(depth) == 100 &&
                       std::abs(c.flash.realized_ratio(depth) - 0.48) < 0.05 && c.architectures.size() == 8;
  const RankStability r = rank_stability(c, teacher);
  std::ostringstream s;
  s << "spearman " << r.spearman << " (flash";
  for (double a : r.flash_accuracy) s << ' ' << a;
  s << " | regular";
  for (double a : r.regular_accuracy) s << ' ' << a;
  s << ')';
  return {budgets && r.spearman >= 0.7, s.str()};
}

Outcome flash_scaling_echo(const RunConfig& c, const TransformerModel& teacher) {
  const FlashScaling f = flash_scaling(c, teacher);
  const auto& a = f.mean_accuracy;
  bool monotone = true;
  for (std::size_t i = 1; i < a.size(); ++i) monotone = monotone && a[i] >= a[i - 1];
  const bool diminishing = a.size() == 4 && (a[3] - a[2]) < (a[1] - a[0]);
  std::ostringstream s;
  s << "accuracy";
  for (std::size_t i = 0; i < a.size(); ++i) s << ' ' << f.total_steps[i] << ':' << a[i];
  return {monotone && diminishing, s.str()};
}

Outcome parameter_counting() {
  const DesignSpace space = DesignSpace::standard();
  auto count = [&](const char* n) { return param_count(parse_config_name(n, 24), space); };
  const double m = static_cast<double>(count("Model_512_128_1_640_2"));
  const bool within = std::abs(m - 20.6e6) <= 0.15 * 20.6e6;
  const bool heads = count("Model_512_128_1_640_2") == count("Model_512_128_2_640_2") &&
                     count("Model_512_128_2_640_2") == count("Model_512_128_4_640_2");
  const bool order = count("Model_512_128_4_512_2") < count("Model_512_128_4_640_2");
  return {within && heads && order, "Model_512_128_1_640_2 = " + num(m) + ", heads invariant " + (heads ? "yes" : "no") +
                                        ", ordering " + (order ? "yes" : "no")};
}

Outcome determinism(const fs::path& teacher_dir) {
  auto cfg = [&](const std::string& name) {
    json j = desk_config(name);
    j["teacher"]["path"] = teacher_dir.string();
    return parse_run_config(j);
  };
  const RunConfig a = cfg("determinism_a");
  const RunConfig b = cfg("determinism_b");
  const RunConfig r = cfg("determinism_resume");
  run_search(a, {-1, true});
  run_search(b, {-1, true});
  run_search(r, {25, true});
  run_search(r);
  const std::string la = read_file(a.run_dir() / "trials.jsonl");
  const bool same = la == read_file(b.run_dir() / "trials.jsonl");
  const bool resumed = la == read_file(r.run_dir() / "trials.jsonl");
  const auto n = read_lines(a.run_dir() / "trials.jsonl").size();
  return {same && resumed && n == 50, num(n) + " trials, repeat identical " + (same ? "yes" : "no") +
                                          ", resume at 25 identical " + (resumed ? "yes" : "no")};
}

Outcome objectives_echo(const RunConfig& c) {
  const ObjectiveComparison r = compare_objectives(c, 50);
  return {r.seeds == 20 && r.seeds_with_unique_points >= 15,
          num(r.seeds_with_unique_points) + " of " + num(r.seeds) + " seeds with multi-objective-only front points"};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  fs::create_directories(work_dir());
  const RunConfig config = parse_run_config(desk_config("desk"));

  const auto t0 = clock::now();
  const Teacher teacher = obtain_teacher(config, work_dir() / "shared");
  std::cout << "teacher: mlm " << teacher.manifest.mlm_accuracy << " target " << teacher.manifest.target_accuracy
            << " (" << std::chrono::duration<double>(clock::now() - t0).count() << " s)" << std::endl;
  const fs::path teacher_dir = work_dir() / "shared" / "teacher";

  struct Criterion {
    int id;
    const char* name;
    double budget;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "loss correctness", 1, loss_correctness},
      {2, "distillation loss structure", 1, loss_structure},
      {3, "gradients", 30, gradients},
      {4, "progressive freezing", 30, progressive_freezing},
      {5, "pareto oracle equivalence", 5, pareto_oracle},
      {6, "gp sanity", 10, gp_sanity},
      {7, "search efficiency", 300, [&] { return search_efficiency(config); }},
      {8, "flash/regular rank stability", 1200, [&] { return rank_stability_echo(config, teacher.model); }},
      {9, "flash step scaling", 1800, [&] { return flash_scaling_echo(config, teacher.model); }},
      {10, "parameter counting", 1, parameter_counting},
      {11, "end-to-end determinism", 600, [&] { return determinism(teacher_dir); }},
      {12, "multi- vs single-objective", 600, [&] { return objectives_echo(config); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    const bool in_time = secs < c.budget;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %2d %-30s %8.2fs / %5.0fs  %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget,
                o.detail.c_str(), in_time ? "" : " [over time budget]");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
