#include "flashnas/evalbench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "flashnas/io.hpp"

namespace flashnas {

AccuracyReport eval_accuracy(const TransformerModel& model, const std::vector<TokenBatch>& batches) {
  AccuracyReport r;
  long mlm_correct = 0;
  long nsp_correct = 0;
  for (const auto& b : batches) {
    Tape tape;
    const ForwardPass pass = model.forward(tape, b);
    if (!b.mask_rows.empty()) {
      const Matrix& logits = model.mlm_logits(tape, pass.output, b.mask_rows).value();
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        mlm_correct += arg == b.mlm_labels[static_cast<std::size_t>(i)];
      }
      r.masked += logits.rows();
    }
    const Matrix& nsp = model.nsp_logits(tape, pass.output, b.batch, b.seq).value();
    for (int i = 0; i < b.batch; ++i) nsp_correct += (nsp(i, 0) > 0.0 ? 1 : 0) == b.nsp_labels[static_cast<std::size_t>(i)];
    r.pairs += b.batch;
  }
  if (r.masked == 0) throw std::invalid_argument("eval_accuracy: no masked positions");
  r.mlm_accuracy = static_cast<double>(mlm_correct) / static_cast<double>(r.masked);
  r.nsp_accuracy = static_cast<double>(nsp_correct) / static_cast<double>(r.pairs);
  return r;
}

AccuracyReport eval_accuracy(const TransformerModel& model, const SyntheticCorpus& corpus, int n_batches,
                             int batch_size) {
  return eval_accuracy(model, corpus.eval_set(n_batches, batch_size));
}

void MetricVector::validate() const {
  if (!(mlm_accuracy >= 0.0 && mlm_accuracy <= 1.0) || !(nsp_accuracy >= 0.0 && nsp_accuracy <= 1.0))
    throw std::invalid_argument("accuracies must lie in [0, 1]");
  if (!(latency_mean > 0.0) || !std::isfinite(latency_mean)) throw std::invalid_argument("latency_mean must be positive");
  if (!(latency_std >= 0.0)) throw std::invalid_argument("latency_std must be nonnegative");
}

std::string_view latency_mode_name(LatencyMode m) { return m == LatencyMode::Measured ? "measured" : "analytic"; }

LatencyMode latency_mode_from_name(std::string_view name) {
  if (name == "measured") return LatencyMode::Measured;
  if (name == "analytic") return LatencyMode::Analytic;
  throw std::invalid_argument("unknown latency mode '" + std::string(name) + "'");
}

void LatencyHarnessConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("latency batch_size must be >= 1");
  if (warmup_runs < 0) throw std::invalid_argument("warmup_runs must be >= 0");
  if (measured_runs < 2) throw std::invalid_argument("measured_runs must be >= 2 to report a std");
  if (!(analytic.machine_flops > 0.0) || !(analytic.bandwidth > 0.0) || !(analytic.kernel_overhead >= 0.0))
    throw std::invalid_argument("analytic constants must be positive");
}

namespace {

struct CostAccumulator {
  const AnalyticConstants& c;
  double seconds = 0.0;

  void kernel(double flops, double bytes) {
    seconds += flops / c.machine_flops + bytes / c.bandwidth + c.kernel_overhead;
  }
  void dense(double rows, double in, double out) {
    kernel(2.0 * rows * in * out, 8.0 * (rows * in + in * out + out + rows * out));
  }
  void elementwise(double n, double flops_per) { kernel(flops_per * n, 16.0 * n); }
};

}  // namespace

CostBreakdown analytic_cost(const ModelShape& s, int batch_size, const AnalyticConstants& constants) {
  s.validate();
  const double n = static_cast<double>(batch_size) * s.seq_len;
  const double seq = s.seq_len;
  const double dh = static_cast<double>(s.bottleneck_size) / s.attention_heads;
  CostBreakdown out;
  out.depth = s.depth;

  CostAccumulator embed{constants};
  embed.kernel(0.0, 8.0 * 2.0 * n * s.embed_dim);  // lookup + positions
  if (s.embed_dim != s.hidden_size) embed.dense(n, s.embed_dim, s.hidden_size);
  out.embedding = embed.seconds;

  CostAccumulator block{constants};
  for (int i = 0; i < 3; ++i) block.dense(n, s.hidden_size, s.bottleneck_size);
  for (int h = 0; h < s.attention_heads; ++h) {
    for (int b = 0; b < batch_size; ++b) {
      block.kernel(2.0 * seq * seq * dh, 8.0 * (2.0 * seq * dh + seq * seq));  // scores
      block.kernel(5.0 * seq * seq, 16.0 * seq * seq);                        // softmax
      block.kernel(2.0 * seq * seq * dh, 8.0 * (seq * seq + 2.0 * seq * dh)); // context
    }
  }
  block.dense(n, s.bottleneck_size, s.bottleneck_size);
  block.elementwise(n * s.bottleneck_size, 1.0);  // residual
  block.elementwise(n * s.bottleneck_size, 8.0);  // layer norm
  for (int f = 0; f < s.stacked_ff; ++f) {
    block.dense(n, s.bottleneck_size, s.intermediate_size);
    block.elementwise(n * s.intermediate_size, 10.0);  // gelu
    block.dense(n, s.intermediate_size, s.bottleneck_size);
    block.elementwise(n * s.bottleneck_size, 1.0);
  }
  block.dense(n, s.bottleneck_size, s.hidden_size);
  block.elementwise(n * s.hidden_size, 1.0);
  block.elementwise(n * s.hidden_size, 8.0);
  out.per_block = block.seconds;

  CostAccumulator head{constants};
  head.dense(n, s.hidden_size, s.vocab_size);
  out.head = head.seconds;
  return out;
}

LatencyReport AnalyticLatency::latency(const TransformerModel& model) {
  LatencyReport r;
  r.mean = analytic_cost(model.shape(), harness_.batch_size, harness_.analytic).total();
  r.samples = {r.mean};
  return r;
}

LatencyReport measure_latency(const TransformerModel& model, const LatencyHarnessConfig& harness) {
  harness.validate();
  const ModelShape& s = model.shape();
  TokenBatch input;
  input.batch = harness.batch_size;
  input.seq = s.seq_len;
  for (int i = 0; i < harness.batch_size * s.seq_len; ++i)
    input.tokens.push_back(kFirstContentToken + i % (s.vocab_size - kFirstContentToken));
  std::vector<int> rows(input.tokens.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);

  auto run = [&] {
    Tape tape;
    const ForwardPass pass = model.forward(tape, input);
    return model.mlm_logits(tape, pass.output, rows).value()(0, 0);
  };

  using Clock = std::chrono::steady_clock;
  volatile double sink = 0.0;
  for (int i = 0; i < harness.warmup_runs; ++i) sink = sink + run();
  LatencyReport r;
  r.samples.reserve(static_cast<std::size_t>(harness.measured_runs));
  for (int i = 0; i < harness.measured_runs; ++i) {
    const auto t0 = Clock::now();
    sink = sink + run();
    const auto t1 = Clock::now();
    r.samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  double sum = 0.0;
  for (double x : r.samples) sum += x;
  r.mean = sum / static_cast<double>(r.samples.size());
  double ss = 0.0;
  for (double x : r.samples) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(r.samples.size() - 1));
  const double period = static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
  r.resolution_warning = period > r.mean;

  if (!harness.samples_csv.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "run_index,seconds\n";
    for (std::size_t i = 0; i < r.samples.size(); ++i) csv << i << ',' << r.samples[i] << '\n';
    write_file_atomic(harness.samples_csv, csv.str());
  }
  return r;
}

std::unique_ptr<LatencyProvider> make_latency_provider(const LatencyHarnessConfig& harness) {
  harness.validate();
  if (harness.mode == LatencyMode::Analytic) return std::make_unique<AnalyticLatency>(harness);
  return std::make_unique<MeasuredLatency>(harness);
}

}  // namespace flashnas
