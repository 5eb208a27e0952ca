#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flashnas/archspace.hpp"
#include "flashnas/corpus.hpp"
#include "flashnas/nnkit.hpp"

namespace flashnas {

/// Widths of one stack of identical bottleneck building blocks.
struct ModelShape {
  int vocab_size = 64;
  int seq_len = 16;
  int embed_dim = 32;
  int hidden_size = 64;
  int bottleneck_size = 64;
  int attention_heads = 4;
  int intermediate_size = 128;
  int stacked_ff = 1;
  int depth = 2;

  static ModelShape from(const ArchitectureConfig& c, const DesignSpace& space);
  ArchitectureConfig architecture() const;
  void validate() const;
};

/// Weight initialization, truncated normal in both cases. FanIn: std
/// 1/sqrt(fan_in) for dense weights and 1 for the embedding table. Fixed: 0.02 everywhere.
enum class InitScheme { FanIn, Fixed };
std::string_view init_scheme_name(InitScheme s);
InitScheme init_scheme_from_name(std::string_view name);

/// Outputs of one forward pass. `attention[k]` holds block k's probabilities in
/// AttentionTensor row layout; `features[k]` its output after the final
/// residual + layer norm, (batch*seq) x hidden.
struct ForwardPass {
  int batch = 0;
  int seq = 0;
  std::vector<Var> attention;
  std::vector<Var> features;
  Var output;
};

/// Embedding, optional embed->hidden resize map, `depth` bottleneck blocks
/// (Q/K/V hidden->bottleneck, attention output, stacked residual FF networks,
/// output map bottleneck->hidden, post-norm) and MLM / NSP heads.
///
/// Parameter names: "embedding/table", "embedding/resize_w|b",
/// "block{k}/..." for k = 1..depth, "head/mlm_w|b", "head/nsp_w|b".
class TransformerModel {
 public:
  TransformerModel(ModelShape shape, std::uint64_t seed, InitScheme init = InitScheme::FanIn);

  const ModelShape& shape() const { return shape_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  static std::string block_prefix(int k) { return "block" + std::to_string(k) + "/"; }

  /// Runs blocks 1..n_blocks (all when n_blocks < 0). With `track` false no
  /// parameter receives gradients.
  ForwardPass forward(Tape& tape, const TokenBatch& batch, int n_blocks = -1, bool track = true);

  /// Logits at the given flat positions, rows x vocab.
  Var mlm_logits(Tape& tape, Var hidden, const std::vector<int>& rows, bool track = true);
  /// One NSP logit per sequence, read at the [CLS] position.
  Var nsp_logits(Tape& tape, Var hidden, int batch, int seq, bool track = true);

  // Inference-only passes; nothing on the tape is tracked.
  ForwardPass forward(Tape& tape, const TokenBatch& batch, int n_blocks = -1) const;
  Var mlm_logits(Tape& tape, Var hidden, const std::vector<int>& rows) const;
  Var nsp_logits(Tape& tape, Var hidden, int batch, int seq) const;

  /// Scalars in embedding, resize map and blocks (heads and adapters excluded).
  std::int64_t backbone_param_count() const;

 private:
  Var block(Tape& tape, Var x, int k, int batch, int seq, bool track, Var* attention);

  ModelShape shape_;
  ParamStore params_;
  Matrix positions_;  // seq x embed_dim sinusoidal encoding
};

/// Truncated normal (|x| <= 2 std) weight initializer.
Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

}  // namespace flashnas
