#include <doctest.h>

#include <set>

#include "flashnas/archspace.hpp"
#include "flashnas/corpus.hpp"

using namespace flashnas;

namespace {

std::vector<int> unmasked_row(const TokenBatch& b, int row) {
  std::vector<int> r(b.tokens.begin() + row * b.seq, b.tokens.begin() + (row + 1) * b.seq);
  for (std::size_t i = 0; i < b.mask_rows.size(); ++i) {
    const int p = b.mask_rows[i];
    if (p / b.seq == row) r[static_cast<std::size_t>(p % b.seq)] = b.mlm_labels[i];
  }
  return r;
}

}  // namespace

TEST_CASE("same seed gives the same stream") {
  const SyntheticCorpus a(CorpusConfig{});
  const SyntheticCorpus b(CorpusConfig{});
  auto ra = make_rng({9});
  auto rb = make_rng({9});
  const TokenBatch x = a.next_batch(Split::Train, ra, 8);
  const TokenBatch y = b.next_batch(Split::Train, rb, 8);
  CHECK(x.tokens == y.tokens);
  CHECK(x.mask_rows == y.mask_rows);
  CHECK(x.mlm_labels == y.mlm_labels);
  CHECK(x.nsp_labels == y.nsp_labels);

  CorpusConfig other;
  other.seed = 8;
  auto rc = make_rng({9});
  CHECK(SyntheticCorpus(other).next_batch(Split::Train, rc, 8).tokens != x.tokens);
}

TEST_CASE("batches follow the pair layout") {
  const SyntheticCorpus c(CorpusConfig{});
  auto rng = make_rng({10});
  const TokenBatch b = c.next_batch(Split::Train, rng, 16);
  CHECK(b.batch == 16);
  CHECK(b.seq == 16);
  CHECK(b.tokens.size() == 256);
  CHECK(b.mask_rows.size() == b.mlm_labels.size());
  const int a_len = c.sentence_a_len();
  for (int r = 0; r < b.batch; ++r) {
    const auto row = unmasked_row(b, r);
    CHECK(row[0] == kClsToken);
    CHECK(row[static_cast<std::size_t>(1 + a_len)] == kSepToken);
    CHECK(row.back() == kSepToken);
  }
  for (std::size_t i = 0; i < b.mask_rows.size(); ++i) {
    CHECK(b.tokens[static_cast<std::size_t>(b.mask_rows[i])] == kMaskToken);
    CHECK(b.mlm_labels[i] >= kFirstContentToken);
  }
}

TEST_CASE("mask and nsp rates are close to their settings") {
  const SyntheticCorpus c(CorpusConfig{});
  auto rng = make_rng({11});
  long masked = 0, positives = 0, content = 0, pairs = 0;
  for (int i = 0; i < 50; ++i) {
    const TokenBatch b = c.next_batch(Split::Train, rng, 32);
    masked += static_cast<long>(b.mask_rows.size());
    for (int l : b.nsp_labels) positives += l;
    content += 32L * (b.seq - 3);
    pairs += 32;
  }
  CHECK(static_cast<double>(masked) / content == doctest::Approx(0.15).epsilon(0.1));
  CHECK(static_cast<double>(positives) / pairs == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("mask rate zero yields no masked positions") {
  CorpusConfig cfg;
  cfg.mask_rate = 0.0;
  const SyntheticCorpus c(cfg);
  auto rng = make_rng({12});
  CHECK(c.next_batch(Split::Train, rng, 8).mask_rows.empty());
}

TEST_CASE("train and eval splits are disjoint") {
  const SyntheticCorpus c(CorpusConfig{});
  auto rng = make_rng({13});
  std::set<std::vector<int>> train;
  for (int i = 0; i < 20; ++i) {
    const TokenBatch b = c.next_batch(Split::Train, rng, 32);
    for (int r = 0; r < b.batch; ++r) {
      auto row = unmasked_row(b, r);
      CHECK(c.split_of(row, b.nsp_labels[static_cast<std::size_t>(r)]) == Split::Train);
      row.push_back(b.nsp_labels[static_cast<std::size_t>(r)]);
      train.insert(row);
    }
  }
  for (const auto& b : c.eval_set(10, 32)) {
    for (int r = 0; r < b.batch; ++r) {
      auto row = unmasked_row(b, r);
      CHECK(c.split_of(row, b.nsp_labels[static_cast<std::size_t>(r)]) == Split::Eval);
      row.push_back(b.nsp_labels[static_cast<std::size_t>(r)]);
      CHECK(train.count(row) == 0);
    }
  }
}

TEST_CASE("eval set is fixed") {
  const SyntheticCorpus c(CorpusConfig{});
  const auto a = c.eval_set(3, 16);
  const auto b = c.eval_set(3, 16);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tokens == b[i].tokens);
}

TEST_CASE("transition tables are stochastic") {
  const SyntheticCorpus c(CorpusConfig{});
  for (int t = 0; t < c.config().topics; ++t) {
    const auto& m = c.transitions(t);
    CHECK(m.rows() == c.content_vocab());
    CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(m.minCoeff() >= 0.0);
  }
}

TEST_CASE("bigram oracle beats chance by 5x") {
  const SyntheticCorpus c(CorpusConfig{});
  const BigramOracle oracle(c, 200, 32, 3);
  const double acc = oracle.accuracy(c.eval_set(16, 32));
  CHECK(acc >= 5.0 / c.content_vocab());
}
