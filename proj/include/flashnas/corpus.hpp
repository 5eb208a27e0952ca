#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace flashnas {

/// Reserved token ids; content tokens occupy [kFirstContentToken, vocab_size).
inline constexpr int kClsToken = 0;
inline constexpr int kSepToken = 1;
inline constexpr int kMaskToken = 2;
inline constexpr int kFirstContentToken = 3;

/// One pre-training batch: `batch` sentence pairs laid out as
/// [CLS] A [SEP] B [SEP], with masked positions replaced by [MASK].
struct TokenBatch {
  int batch = 0;
  int seq = 0;
  std::vector<int> tokens;       // batch * seq, row-major
  std::vector<int> mask_rows;    // flat positions b * seq + s of masked tokens
  std::vector<int> mlm_labels;   // original token at each masked position
  std::vector<int> nsp_labels;   // 1 when B continues A
};

enum class Split { Train, Eval };

struct CorpusConfig {
  std::uint64_t seed = 7;
  int vocab_size = 64;
  int seq_len = 16;
  double mask_rate = 0.15;
  double nsp_positive_rate = 0.5;
  int topics = 4;
  int successors = 3;
  /// Probability of moving to one of the planted successors (rest uniform).
  double concentration = 0.9;
  /// One sequence in `eval_modulus` (by content hash) belongs to the eval split.
  int eval_modulus = 8;
};

/// Topic-conditioned Markov-chain text with planted bigram structure. Splits are
/// disjoint by construction: a sequence's hash decides its split and each
/// generator rejects sequences of the other split.
class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(CorpusConfig config);

  const CorpusConfig& config() const { return config_; }
  int content_vocab() const { return config_.vocab_size - kFirstContentToken; }
  int sentence_a_len() const { return (config_.seq_len - 3) / 2; }
  int sentence_b_len() const { return config_.seq_len - 3 - sentence_a_len(); }

  TokenBatch next_batch(Split split, std::mt19937_64& rng, int batch_size) const;

  /// Fixed evaluation set drawn from a stream derived from the corpus seed.
  std::vector<TokenBatch> eval_set(int n_batches, int batch_size) const;

  /// Split of an unmasked token row (used by tests to verify disjointness).
  Split split_of(const std::vector<int>& row, int nsp_label) const;

  /// Planted transition probabilities of topic `t` (content x content).
  const Eigen::MatrixXd& transitions(int topic) const { return transitions_[static_cast<std::size_t>(topic)]; }

 private:
  struct Pair {
    std::vector<int> row;
    int nsp = 0;
  };
  Pair draw_pair(std::mt19937_64& rng) const;
  int step(int topic, int token, std::mt19937_64& rng) const;

  CorpusConfig config_;
  std::vector<Eigen::MatrixXd> transitions_;
  // Sampling mutates only the distribution's cached state, not the law.
  mutable std::vector<std::vector<std::discrete_distribution<int>>> samplers_;
};

/// Predicts masked tokens from bigram counts over training text:
/// argmax_x P(x | left) P(right | x), with add-one smoothing.
class BigramOracle {
 public:
  BigramOracle(const SyntheticCorpus& corpus, int train_batches, int batch_size, std::uint64_t seed);
  int predict(const TokenBatch& batch, int flat_position) const;
  double accuracy(const std::vector<TokenBatch>& batches) const;

 private:
  int vocab_;
  Eigen::MatrixXd counts_;
};

}  // namespace flashnas
