#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace flashnas {

/// The five configurable factors of one building block, in mixed-radix order
/// (HiddenSize is the most significant digit).
enum class Factor { HiddenSize = 0, BottleneckSize, AttentionHeads, IntermediateSize, StackedFF };

inline constexpr int kNumFactors = 5;
inline constexpr std::array<Factor, kNumFactors> kFactorOrder = {
    Factor::HiddenSize, Factor::BottleneckSize, Factor::AttentionHeads,
    Factor::IntermediateSize, Factor::StackedFF};

std::string_view factor_name(Factor f);
Factor factor_from_name(std::string_view name);

/// Point in normalized ordinal coordinates, one entry per factor in [0, 1].
using UnitPoint = Eigen::Matrix<double, kNumFactors, 1>;

struct FactorDomain {
  Factor factor = Factor::HiddenSize;
  std::vector<int> values;

  /// Throws std::invalid_argument unless values are nonempty, positive and
  /// strictly increasing.
  void validate() const;
  /// Position of `v` in `values`, or -1.
  int index_of(int v) const;
  int size() const { return static_cast<int>(values.size()); }
};

struct ArchitectureConfig {
  int hidden_size = 0;
  int bottleneck_size = 0;
  int attention_heads = 0;
  int intermediate_size = 0;
  int stacked_ff = 0;
  int depth = 0;

  int value(Factor f) const;
  void set(Factor f, int v);

  /// "Model_{hidden}_{bottleneck}_{heads}_{intermediate}_{stackedff}"
  std::string name() const;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Parses a canonical model name; depth is taken from the caller.
ArchitectureConfig parse_config_name(std::string_view name, int depth);

class DesignSpace {
 public:
  /// The five-factor example space: 4 x 4 x 4 x 3 x 3 = 576 configurations,
  /// 24 stacked blocks, BERT vocabulary, embedding width 128.
  static DesignSpace standard();

  DesignSpace(std::array<FactorDomain, kNumFactors> domains, int depth, int vocab_size,
              int seq_len, int embed_dim);

  const FactorDomain& domain(Factor f) const { return domains_[static_cast<int>(f)]; }
  int depth() const { return depth_; }
  int vocab_size() const { return vocab_size_; }
  int seq_len() const { return seq_len_; }
  int embed_dim() const { return embed_dim_; }

  std::uint64_t cardinality() const;

  /// Mixed-radix ordinal; throws std::invalid_argument if a value lies outside its domain.
  std::uint64_t encode(const ArchitectureConfig& c) const;
  /// Throws std::out_of_range when index >= cardinality().
  ArchitectureConfig decode(std::uint64_t index) const;

  bool contains(const ArchitectureConfig& c) const;
  /// Throws std::invalid_argument describing the first violated invariant.
  void validate(const ArchitectureConfig& c) const;

  std::vector<ArchitectureConfig> enumerate() const;

  /// Ordinal position of each factor scaled to [0, 1]; singleton domains map to 0.
  UnitPoint normalize(const ArchitectureConfig& c) const;
  /// Nearest admissible configuration to a point of [0, 1]^5 (clamped first).
  ArchitectureConfig snap(const UnitPoint& u) const;

  template <typename Rng>
  ArchitectureConfig sample(Rng& rng) const {
    std::uniform_int_distribution<std::uint64_t> pick(0, cardinality() - 1);
    return decode(pick(rng));
  }
  ArchitectureConfig sample_uniform(std::uint64_t seed) const;

 private:
  std::array<FactorDomain, kNumFactors> domains_;
  int depth_;
  int vocab_size_;
  int seq_len_;
  int embed_dim_;
};

/// Breakdown of the analytic parameter total.
struct ParamBreakdown {
  std::int64_t embedding = 0;  // vocab x embed_dim table
  std::int64_t resize = 0;     // embed_dim -> hidden map with bias, absent when widths agree
  std::int64_t per_block = 0;
  std::int64_t blocks = 0;     // depth * per_block
  std::int64_t total() const { return embedding + resize + blocks; }
};

/// Analytic parameter count of the backbone. Counts biases and layer-norm gain/shift;
/// excludes classifier heads and distillation adapters. Per block:
///   Q, K, V: hidden -> bottleneck; attention output: bottleneck -> bottleneck;
///   stacked_ff x (bottleneck -> intermediate -> bottleneck);
///   output map bottleneck -> hidden; layer norms at bottleneck and hidden width.
ParamBreakdown param_breakdown(const ArchitectureConfig& c, const DesignSpace& space);
std::int64_t param_count(const ArchitectureConfig& c, const DesignSpace& space);

/// Seeded 64-bit engine built from a list of stream identifiers.
std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> keys);

}  // namespace flashnas
