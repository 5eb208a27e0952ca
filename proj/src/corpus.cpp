#include "flashnas/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flashnas/archspace.hpp"

namespace flashnas {

SyntheticCorpus::SyntheticCorpus(CorpusConfig config) : config_(config) {
  if (config_.vocab_size < kFirstContentToken + 2) throw std::invalid_argument("corpus vocab_size too small");
  if (config_.seq_len < 5) throw std::invalid_argument("corpus seq_len must be at least 5");
  if (config_.mask_rate < 0.0 || config_.mask_rate > 1.0) throw std::invalid_argument("mask_rate outside [0, 1]");
  if (config_.topics < 1 || config_.successors < 1) throw std::invalid_argument("topics and successors must be positive");
  const int n = content_vocab();
  if (config_.successors > n) throw std::invalid_argument("more successors than content tokens");

  auto rng = make_rng({config_.seed, 0x7AB1E5ull});
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int t = 0; t < config_.topics; ++t) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, (1.0 - config_.concentration) / n);
    for (int a = 0; a < n; ++a) {
      std::iota(ids.begin(), ids.end(), 0);
      std::shuffle(ids.begin(), ids.end(), rng);
      // Geometric weights 1, 1/2, 1/4, ... over the planted successors.
      double norm = 0.0;
      for (int k = 0; k < config_.successors; ++k) norm += std::pow(0.5, k);
      for (int k = 0; k < config_.successors; ++k)
        m(a, ids[static_cast<std::size_t>(k)]) += config_.concentration * std::pow(0.5, k) / norm;
    }
    transitions_.push_back(m);
    std::vector<std::discrete_distribution<int>> rows;
    for (int a = 0; a < n; ++a) {
      Eigen::VectorXd row = m.row(a).transpose();
      rows.emplace_back(row.data(), row.data() + n);
    }
    samplers_.push_back(std::move(rows));
  }
}

int SyntheticCorpus::step(int topic, int token, std::mt19937_64& rng) const {
  return samplers_[static_cast<std::size_t>(topic)][static_cast<std::size_t>(token)](rng);
}

SyntheticCorpus::Pair SyntheticCorpus::draw_pair(std::mt19937_64& rng) const {
  const int n = content_vocab();
  std::uniform_int_distribution<int> topic_dist(0, config_.topics - 1);
  std::uniform_int_distribution<int> token_dist(0, n - 1);
  std::bernoulli_distribution positive(config_.nsp_positive_rate);

  Pair p;
  p.row.reserve(static_cast<std::size_t>(config_.seq_len));
  const int topic_a = topic_dist(rng);
  int tok = token_dist(rng);
  p.row.push_back(kClsToken);
  for (int i = 0; i < sentence_a_len(); ++i) {
    if (i > 0) tok = step(topic_a, tok, rng);
    p.row.push_back(tok + kFirstContentToken);
  }
  p.row.push_back(kSepToken);

  p.nsp = positive(rng) ? 1 : 0;
  int topic_b = topic_a;
  if (p.nsp == 1) {
    tok = step(topic_a, tok, rng);
  } else {
    if (config_.topics > 1) {
      std::uniform_int_distribution<int> other(0, config_.topics - 2);
      topic_b = other(rng);
      if (topic_b >= topic_a) ++topic_b;
    }
    tok = token_dist(rng);
  }
  for (int i = 0; i < sentence_b_len(); ++i) {
    if (i > 0) tok = step(topic_b, tok, rng);
    p.row.push_back(tok + kFirstContentToken);
  }
  p.row.push_back(kSepToken);
  return p;
}

Split SyntheticCorpus::split_of(const std::vector<int>& row, int nsp_label) const {
  std::uint64_t h = 1469598103934665603ull ^ config_.seed;
  for (int t : row) {
    h ^= static_cast<std::uint64_t>(t) + 1;
    h *= 1099511628211ull;
  }
  h ^= static_cast<std::uint64_t>(nsp_label) + 0x9E37ull;
  h *= 1099511628211ull;
  return (h >> 17) % static_cast<std::uint64_t>(config_.eval_modulus) == 0 ? Split::Eval : Split::Train;
}

TokenBatch SyntheticCorpus::next_batch(Split split, std::mt19937_64& rng, int batch_size) const {
  TokenBatch b;
  b.batch = batch_size;
  b.seq = config_.seq_len;
  b.tokens.reserve(static_cast<std::size_t>(batch_size * config_.seq_len));

  std::vector<int> content_positions;
  for (int s = 1; s <= sentence_a_len(); ++s) content_positions.push_back(s);
  for (int s = sentence_a_len() + 2; s < config_.seq_len - 1; ++s) content_positions.push_back(s);
  int n_mask = 0;
  if (config_.mask_rate > 0.0) {
    n_mask = std::max(1, static_cast<int>(std::lround(config_.mask_rate * content_positions.size())));
  }

  for (int i = 0; i < batch_size; ++i) {
    Pair p = draw_pair(rng);
    while (split_of(p.row, p.nsp) != split) p = draw_pair(rng);
    std::vector<int> pos = content_positions;
    for (int k = 0; k < n_mask; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(pos.size()) - 1);
      std::swap(pos[static_cast<std::size_t>(k)], pos[static_cast<std::size_t>(pick(rng))]);
    }
    std::sort(pos.begin(), pos.begin() + n_mask);
    for (int k = 0; k < n_mask; ++k) {
      const int s = pos[static_cast<std::size_t>(k)];
      b.mask_rows.push_back(i * config_.seq_len + s);
      b.mlm_labels.push_back(p.row[static_cast<std::size_t>(s)]);
      p.row[static_cast<std::size_t>(s)] = kMaskToken;
    }
    b.tokens.insert(b.tokens.end(), p.row.begin(), p.row.end());
    b.nsp_labels.push_back(p.nsp);
  }
  return b;
}

std::vector<TokenBatch> SyntheticCorpus::eval_set(int n_batches, int batch_size) const {
  auto rng = make_rng({config_.seed, 0xE7A15E7ull});
  std::vector<TokenBatch> out;
  out.reserve(static_cast<std::size_t>(n_batches));
  for (int i = 0; i < n_batches; ++i) out.push_back(next_batch(Split::Eval, rng, batch_size));
  return out;
}

BigramOracle::BigramOracle(const SyntheticCorpus& corpus, int train_batches, int batch_size, std::uint64_t seed)
    : vocab_(corpus.config().vocab_size),
      counts_(Eigen::MatrixXd::Ones(corpus.config().vocab_size, corpus.config().vocab_size)) {
  auto rng = make_rng({seed, 0xB16A4ull});
  for (int i = 0; i < train_batches; ++i) {
    TokenBatch b = corpus.next_batch(Split::Train, rng, batch_size);
    std::vector<int> tokens = b.tokens;
    for (std::size_t k = 0; k < b.mask_rows.size(); ++k)
      tokens[static_cast<std::size_t>(b.mask_rows[k])] = b.mlm_labels[k];
    for (int r = 0; r < b.batch; ++r) {
      for (int s = 0; s + 1 < b.seq; ++s) {
        const int a = tokens[static_cast<std::size_t>(r * b.seq + s)];
        const int c = tokens[static_cast<std::size_t>(r * b.seq + s + 1)];
        if (a >= kFirstContentToken && c >= kFirstContentToken) counts_(a, c) += 1.0;
      }
    }
  }
}

int BigramOracle::predict(const TokenBatch& batch, int flat) const {
  const int s = flat % batch.seq;
  const int left = s > 0 ? batch.tokens[static_cast<std::size_t>(flat - 1)] : kClsToken;
  const int right = s + 1 < batch.seq ? batch.tokens[static_cast<std::size_t>(flat + 1)] : kSepToken;
  int best = kFirstContentToken;
  double best_score = -1.0;
  for (int x = kFirstContentToken; x < vocab_; ++x) {
    double score = 1.0;
    if (left >= kFirstContentToken) {
      score *= counts_(left, x) / counts_.row(left).tail(vocab_ - kFirstContentToken).sum();
    }
    if (right >= kFirstContentToken) {
      score *= counts_(x, right) / counts_.row(x).tail(vocab_ - kFirstContentToken).sum();
    }
    if (score > best_score) {
      best_score = score;
      best = x;
    }
  }
  return best;
}

double BigramOracle::accuracy(const std::vector<TokenBatch>& batches) const {
  long correct = 0;
  long total = 0;
  for (const auto& b : batches) {
    for (std::size_t k = 0; k < b.mask_rows.size(); ++k) {
      correct += predict(b, b.mask_rows[k]) == b.mlm_labels[k];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no masked positions to score");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace flashnas
