#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flashnas/archspace.hpp"
#include "flashnas/corpus.hpp"
#include "flashnas/model.hpp"

namespace flashnas {

struct AccuracyReport {
  double mlm_accuracy = 0.0;
  double nsp_accuracy = 0.0;
  long masked = 0;
  long pairs = 0;
};

/// Top-1 masked-token accuracy and NSP accuracy. Throws std::invalid_argument
/// when the batches contain no masked positions.
AccuracyReport eval_accuracy(const TransformerModel& model, const std::vector<TokenBatch>& batches);
AccuracyReport eval_accuracy(const TransformerModel& model, const SyntheticCorpus& corpus, int n_batches,
                             int batch_size = 32);

struct MetricVector {
  double mlm_accuracy = 0.0;
  double nsp_accuracy = 0.0;
  double latency_mean = 0.0;  // seconds
  double latency_std = 0.0;   // seconds
  std::int64_t param_count = 0;

  void validate() const;
};

enum class LatencyMode { Measured, Analytic };
std::string_view latency_mode_name(LatencyMode m);
LatencyMode latency_mode_from_name(std::string_view name);

struct AnalyticConstants {
  double machine_flops = 5e10;     // flop/s
  double bandwidth = 2e10;         // byte/s
  double kernel_overhead = 1e-6;   // seconds per launched kernel
};

struct LatencyHarnessConfig {
  int batch_size = 1;
  int warmup_runs = 5;
  int measured_runs = 30;
  LatencyMode mode = LatencyMode::Measured;
  AnalyticConstants analytic;
  /// When set, measured samples are written here as "run_index,seconds".
  std::string samples_csv;

  void validate() const;
};

struct LatencyReport {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> samples;
  /// Set when the clock period is coarser than the measured mean.
  bool resolution_warning = false;
};

/// Deterministic cost split; blocks contribute depth x per_block exactly.
struct CostBreakdown {
  double embedding = 0.0;
  double per_block = 0.0;
  double head = 0.0;
  int depth = 0;

  double blocks() const { return depth * per_block; }
  double total() const { return embedding + blocks() + head; }
};

/// Sum over layers of flops / machine_flops + bytes / bandwidth + kernel
/// overhead. Attention is costed per head, so head count changes latency
/// while leaving the parameter count untouched.
CostBreakdown analytic_cost(const ModelShape& shape, int batch_size, const AnalyticConstants& constants);

/// Times single forward passes (backbone + MLM head) at the harness batch size.
LatencyReport measure_latency(const TransformerModel& model, const LatencyHarnessConfig& harness);

/// Source of the latency objective; a hardware harness can replace the defaults.
class LatencyProvider {
 public:
  virtual ~LatencyProvider() = default;
  virtual LatencyReport latency(const TransformerModel& model) = 0;
  virtual std::string_view name() const = 0;
};

class MeasuredLatency final : public LatencyProvider {
 public:
  explicit MeasuredLatency(LatencyHarnessConfig harness) : harness_(std::move(harness)) {}
  LatencyReport latency(const TransformerModel& model) override { return measure_latency(model, harness_); }
  std::string_view name() const override { return "measured"; }

 private:
  LatencyHarnessConfig harness_;
};

class AnalyticLatency final : public LatencyProvider {
 public:
  explicit AnalyticLatency(LatencyHarnessConfig harness) : harness_(std::move(harness)) {}
  LatencyReport latency(const TransformerModel& model) override;
  std::string_view name() const override { return "analytic"; }

 private:
  LatencyHarnessConfig harness_;
};

std::unique_ptr<LatencyProvider> make_latency_provider(const LatencyHarnessConfig& harness);

}  // namespace flashnas
