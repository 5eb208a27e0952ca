#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "flashnas/evalbench.hpp"
#include "flashnas/io.hpp"

using namespace flashnas;

namespace {

ModelShape small_shape() {
  ModelShape s;
  s.vocab_size = 64;
  s.seq_len = 16;
  s.embed_dim = 16;
  s.hidden_size = 24;
  s.bottleneck_size = 16;
  s.attention_heads = 2;
  s.intermediate_size = 32;
  s.stacked_ff = 1;
  s.depth = 2;
  return s;
}

}  // namespace

TEST_CASE("untrained model scores near chance") {
  const SyntheticCorpus corpus(CorpusConfig{});
  const auto eval = corpus.eval_set(16, 32);
  long masked = 0;
  for (const auto& b : eval) masked += static_cast<long>(b.mask_rows.size());
  double total = 0.0;
  const int models = 5;
  for (int seed = 0; seed < models; ++seed) {
    const TransformerModel m(small_shape(), static_cast<std::uint64_t>(seed));
    const AccuracyReport r = eval_accuracy(m, eval);
    CHECK(r.masked == masked);
    CHECK(r.mlm_accuracy >= 0.0);
    CHECK(r.mlm_accuracy <= 1.0);
    total += r.mlm_accuracy;
  }
  // Averaged over seeds the untrained predictor is uniform over the vocabulary.
  const double p = 1.0 / 64.0;
  const double sigma = std::sqrt(p * (1.0 - p) / (static_cast<double>(masked) * models));
  CHECK(std::abs(total / models - p) <= 3.0 * sigma + 1.0 / 64.0);
}

TEST_CASE("eval_accuracy is deterministic and order invariant") {
  const SyntheticCorpus corpus(CorpusConfig{});
  const TransformerModel m(small_shape(), 3);
  auto eval = corpus.eval_set(6, 16);
  const AccuracyReport a = eval_accuracy(m, eval);
  const AccuracyReport b = eval_accuracy(m, eval);
  CHECK(a.mlm_accuracy == b.mlm_accuracy);
  CHECK(a.nsp_accuracy == b.nsp_accuracy);
  std::reverse(eval.begin(), eval.end());
  const AccuracyReport c = eval_accuracy(m, eval);
  CHECK(a.mlm_accuracy == c.mlm_accuracy);
  CHECK(a.nsp_accuracy == c.nsp_accuracy);
}

TEST_CASE("eval_accuracy needs masked positions") {
  CorpusConfig cfg;
  cfg.mask_rate = 0.0;
  const SyntheticCorpus corpus(cfg);
  const TransformerModel m(small_shape(), 3);
  CHECK_THROWS_AS(eval_accuracy(m, corpus, 2, 8), std::invalid_argument);
}

TEST_CASE("metric vectors validate their ranges") {
  MetricVector m{0.5, 0.5, 1e-3, 0.0, 10};
  CHECK_NOTHROW(m.validate());
  MetricVector bad = m;
  bad.mlm_accuracy = 1.5;
  CHECK_THROWS(bad.validate());
  bad = m;
  bad.latency_mean = 0.0;
  CHECK_THROWS(bad.validate());
  bad = m;
  bad.latency_std = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("analytic cost is deterministic and linear in depth") {
  const AnalyticConstants k;
  ModelShape s = small_shape();
  const CostBreakdown a = analytic_cost(s, 1, k);
  const CostBreakdown b = analytic_cost(s, 1, k);
  CHECK(a.total() == b.total());
  s.depth = 4;
  const CostBreakdown d = analytic_cost(s, 1, k);
  CHECK(d.per_block == a.per_block);
  CHECK(d.blocks() == 2.0 * a.blocks());
  CHECK(d.embedding == a.embedding);
  CHECK(d.head == a.head);

  AnalyticLatency provider({});
  const TransformerModel m(small_shape(), 1);
  CHECK(provider.latency(m).mean == a.total());
  CHECK(provider.latency(m).std == 0.0);
}

TEST_CASE("analytic latency depends on heads while param count does not") {
  const DesignSpace space = DesignSpace::standard();
  const AnalyticConstants k;
  auto lat = [&](const char* name) {
    return analytic_cost(ModelShape::from(parse_config_name(name, 24), space), 1, k).total();
  };
  CHECK(lat("Model_512_128_4_640_2") > lat("Model_512_128_1_640_2"));

  // Larger models are not always slower.
  bool inversion = false;
  const auto all = space.enumerate();
  for (std::size_t i = 0; i < all.size() && !inversion; ++i) {
    for (std::size_t j = 0; j < all.size() && !inversion; ++j) {
      const auto& a = all[i];
      const auto& b = all[j];
      inversion = param_count(a, space) > param_count(b, space) &&
                  analytic_cost(ModelShape::from(a, space), 1, k).total() <
                      analytic_cost(ModelShape::from(b, space), 1, k).total();
    }
  }
  CHECK(inversion);
}

TEST_CASE("measured latency reports what it times") {
  const TransformerModel m(small_shape(), 2);
  LatencyHarnessConfig h;
  h.warmup_runs = 1;
  h.measured_runs = 5;
  h.samples_csv = (std::filesystem::temp_directory_path() / "flashnas_latency_samples.csv").string();
  const LatencyReport r = measure_latency(m, h);
  REQUIRE(r.samples.size() == 5);
  double sum = 0.0;
  for (double x : r.samples) {
    CHECK(x > 0.0);
    sum += x;
  }
  CHECK(r.mean == doctest::Approx(sum / 5.0));
  CHECK(r.std >= 0.0);
  const auto lines = read_lines(h.samples_csv);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "run_index,seconds");
  std::filesystem::remove(h.samples_csv);

  h.measured_runs = 1;
  CHECK_THROWS(measure_latency(m, h));
}

TEST_CASE("latency providers by mode") {
  LatencyHarnessConfig h;
  h.mode = LatencyMode::Analytic;
  CHECK(make_latency_provider(h)->name() == "analytic");
  h.mode = LatencyMode::Measured;
  CHECK(make_latency_provider(h)->name() == "measured");
  CHECK(latency_mode_from_name("analytic") == LatencyMode::Analytic);
  CHECK_THROWS(latency_mode_from_name("tpu"));
}
