#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "flashnas/archspace.hpp"
#include "flashnas/gradcheck.hpp"
#include "flashnas/nnkit.hpp"
#include "flashnas/optim.hpp"

using namespace flashnas;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  auto rng = make_rng({seed, 0xBEEFull});
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_rows_distribution(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  return nn::softmax_rows(random_matrix(r, c, seed, 1.5));
}

// Random projection to a scalar so every output entry reaches the loss.
Var project(Var x, std::uint64_t seed) {
  Tape& t = *x.tape();
  const Matrix w = random_matrix(x.cols(), 1, seed);
  return nn::sum(nn::matmul(x, t.constant(w)));
}

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("softmax rows are distributions and shift invariant") {
  Matrix x = random_matrix(5, 7, 1, 3.0);
  const Matrix p = nn::softmax_rows(x);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-9);
    CHECK(p.row(r).minCoeff() >= 0.0);
  }
  Matrix shifted = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) shifted.row(r).array() += 100.0 * static_cast<double>(r) - 50.0;
  CHECK((nn::softmax_rows(shifted) - p).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix u = nn::softmax_rows(Matrix::Constant(1, 4, 3.0));
  CHECK((u.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("layernorm normalizes each row") {
  const Matrix y = nn::layernorm_normalize(random_matrix(6, 9, 2, 4.0));
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mean = y.row(r).mean();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs((y.row(r).array() - mean).square().mean() - 1.0) < 1e-9);
  }
}

TEST_CASE("matmul identity and shape errors") {
  Tape t;
  const Matrix x = random_matrix(3, 4, 3);
  const Var out = nn::matmul(t.constant(Matrix::Identity(3, 3)), t.constant(x));
  CHECK((out.value() - x).cwiseAbs().maxCoeff() == 0.0);
  try {
    nn::matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(4, 5)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
}

TEST_CASE("gradient of a linear sum is the broadcast input") {
  ParamStore s;
  const Matrix x = random_matrix(4, 3, 4);
  s.add("w", random_matrix(3, 2, 5));
  Tape t;
  t.backward(nn::sum(nn::matmul(t.constant(x), t.param(s, "w"))));
  const Matrix expected = x.colwise().sum().transpose() * Matrix::Ones(1, 2);
  CHECK((s.at("w").grad - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward requires a scalar loss") {
  ParamStore s;
  s.add("w", random_matrix(2, 2, 6));
  Tape t;
  CHECK_THROWS_AS(t.backward(t.param(s, "w")), ShapeError);
}

TEST_CASE("non-finite values name the primitive") {
  Tape t;
  try {
    nn::scale(t.constant(Matrix::Constant(1, 1, 1e308)), 1e10);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.op() == "scale");
  }
}

TEST_CASE("every primitive passes finite differences") {
  ParamStore s;
  const int batch = 2, seq = 3, heads = 2, width = 4;
  s.add("a", random_matrix(batch * seq, width, 10));
  s.add("b", random_matrix(width, 3, 11));
  s.add("c", random_matrix(batch * seq, width, 12));
  s.add("bias", random_matrix(1, width, 13));
  s.add("gain", random_matrix(1, width, 14));
  s.add("table", random_matrix(7, width, 15));
  s.add("mix", random_rows_distribution(3, heads, 16));
  const std::vector<int> ids{0, 3, 6, 3, 1, 2};

  auto check = [&](const char* what, const LossBuilder& f) {
    CAPTURE(what);
    const GradCheckReport r = grad_check(s, f, kTol);
    CHECK_MESSAGE(r.passed, r.summary());
    CHECK(r.checked > 0);
  };

  check("matmul", [&](Tape& t) { return project(nn::matmul(t.param(s, "a"), t.param(s, "b")), 1); });
  check("add", [&](Tape& t) { return project(nn::add(t.param(s, "a"), t.param(s, "c")), 2); });
  check("add_bias", [&](Tape& t) { return project(nn::add_bias(t.param(s, "a"), t.param(s, "bias")), 3); });
  check("scale", [&](Tape& t) { return project(nn::scale(t.param(s, "a"), -2.5), 4); });
  check("layernorm", [&](Tape& t) {
    return project(nn::layernorm(t.param(s, "a"), t.param(s, "gain"), t.param(s, "bias")), 5);
  });
  check("softmax", [&](Tape& t) { return project(nn::softmax_rows(t.param(s, "a")), 6); });
  check("gelu", [&](Tape& t) { return project(nn::gelu(t.param(s, "a")), 7); });
  check("embedding", [&](Tape& t) { return project(nn::embedding_lookup(t.param(s, "table"), ids), 8); });
  check("gather", [&](Tape& t) { return project(nn::gather_rows(t.param(s, "a"), {5, 0, 5, 2}), 9); });
  check("attention", [&](Tape& t) {
    const Var p = nn::softmax_rows(nn::attention_scores(t.param(s, "a"), t.param(s, "c"), batch, seq, heads));
    return project(nn::attention_context(p, t.param(s, "c"), batch, seq, heads), 10);
  });
  check("mix_heads", [&](Tape& t) {
    const Var p = nn::softmax_rows(nn::attention_scores(t.param(s, "a"), t.param(s, "c"), batch, seq, heads));
    return project(nn::mix_heads(p, t.param(s, "mix"), batch, seq), 11);
  });
  check("mse", [&](Tape& t) { return nn::mse(t.param(s, "a"), random_matrix(batch * seq, width, 20)); });
  check("softmax+kl", [&](Tape& t) {
    return nn::kl_rows(nn::softmax_rows(t.param(s, "a")), random_rows_distribution(batch * seq, width, 21));
  });
  check("cross_entropy", [&](Tape& t) { return nn::cross_entropy(t.param(s, "a"), {0, 3, 1, 1, 2, 0}); });
  check("soft_cross_entropy", [&](Tape& t) {
    return nn::soft_cross_entropy(t.param(s, "a"), random_rows_distribution(batch * seq, width, 22));
  });
  check("bce", [&](Tape& t) {
    return nn::bce_with_logits(nn::matmul(t.param(s, "a"), t.constant(random_matrix(width, 1, 23))),
                               {1, 0, 0, 1, 1, 0});
  });
}

TEST_CASE("mixed heads keep rows stochastic") {
  Tape t;
  const int batch = 2, seq = 4, heads = 3;
  const Matrix p = random_rows_distribution(batch * heads * seq, seq, 30);
  const Matrix mix = random_rows_distribution(2, heads, 31);
  const Var out = nn::mix_heads(t.constant(p), t.constant(mix), batch, seq);
  CHECK(out.rows() == batch * 2 * seq);
  for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(std::abs(out.value().row(r).sum() - 1.0) < 1e-12);
  // output head o of sequence b at row i equals sum_h mix(o, h) p_h
  const int b = 1, o = 1, i = 2;
  double expect = 0.0;
  for (int h = 0; h < heads; ++h) expect += mix(o, h) * p((b * heads + h) * seq + i, 3);
  CHECK(out.value()((b * 2 + o) * seq + i, 3) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("attention scores use 1/sqrt(d_head) per sequence and head") {
  Tape t;
  const int batch = 2, seq = 3, heads = 2, dh = 2;
  const Matrix q = random_matrix(batch * seq, heads * dh, 40);
  const Matrix k = random_matrix(batch * seq, heads * dh, 41);
  const Matrix sc = nn::attention_scores(t.constant(q), t.constant(k), batch, seq, heads).value();
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < seq; ++i)
        for (int j = 0; j < seq; ++j) {
          double dot = 0.0;
          for (int d = 0; d < dh; ++d) dot += q(b * seq + i, h * dh + d) * k(b * seq + j, h * dh + d);
          CHECK(sc((b * heads + h) * seq + i, j) == doctest::Approx(dot / std::sqrt(2.0)).epsilon(1e-14));
        }
}

TEST_CASE("single dense layer with mse passes at 1e-6") {
  ParamStore s;
  s.add("w", random_matrix(4, 3, 50));
  s.add("b", random_matrix(1, 3, 51));
  const Matrix x = random_matrix(5, 4, 52);
  const Matrix y = random_matrix(5, 3, 53);
  const auto r = grad_check(s, [&](Tape& t) {
    return nn::mse(nn::add_bias(nn::matmul(t.constant(x), t.param(s, "w")), t.param(s, "b")), y);
  }, 1e-6);
  CHECK_MESSAGE(r.passed, r.summary());
}

TEST_CASE("grad_check catches a corrupted backward rule") {
  ParamStore s;
  s.add("w", random_matrix(3, 3, 60));
  const auto r = grad_check(s, [&](Tape& t) {
    const Var w = t.param(s, "w");
    Matrix sq = w.value().array().square();
    const Var y = t.record("bad_square", std::move(sq), {w}, [w](Tape& tape, const Matrix& g) {
      tape.accumulate(w, (g.array() * tape.value(w).array()).matrix());  // missing factor 2
    });
    return nn::sum(y);
  }, 1e-4);
  CHECK_FALSE(r.passed);
  CHECK(r.worst_param == "w");
  CHECK(r.max_error > 0.1);
}

TEST_CASE("grad_check refuses large fragments") {
  ParamStore s;
  s.add("w", Matrix::Zero(80, 80));
  CHECK_THROWS_AS(grad_check(s, [&](Tape& t) { return nn::sum(t.param(s, "w")); }, 1e-4), std::invalid_argument);
}

TEST_CASE("frozen parameters get no gradient and no update") {
  ParamStore s;
  s.add("a/w", random_matrix(3, 2, 70));
  s.add("b/w", random_matrix(2, 1, 71));
  s.set_trainable_prefix("a/", false);
  const std::uint64_t frozen = s.hash("a/");
  auto opt = make_optimizer({});
  const Matrix x = random_matrix(4, 3, 72);
  for (int i = 0; i < 5; ++i) {
    Tape t;
    t.backward(nn::sum(nn::matmul(nn::matmul(t.constant(x), t.param(s, "a/w")), t.param(s, "b/w"))));
    CHECK(s.at("a/w").grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.at("b/w").grad.cwiseAbs().maxCoeff() > 0.0);
    opt->step(s, 1e-2);
    s.zero_grad();
  }
  CHECK(s.hash("a/") == frozen);

  s.set_all_trainable(false);
  Tape t;
  const Var loss = nn::sum(nn::matmul(nn::matmul(t.constant(x), t.param(s, "a/w")), t.param(s, "b/w")));
  t.backward(loss);
  for (const auto& p : s) CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.trainable_scalar_count() == 0);
}

TEST_CASE("optimizer step with learning rate 0 is bit-identical") {
  for (OptimizerKind kind : {OptimizerKind::Adam, OptimizerKind::SgdMomentum}) {
    ParamStore s;
    s.add("w", random_matrix(3, 3, 80));
    const std::uint64_t before = s.hash();
    auto opt = make_optimizer({kind});
    for (int i = 0; i < 3; ++i) {
      s.at("w").grad = random_matrix(3, 3, 81 + static_cast<std::uint64_t>(i));
      opt->step(s, 0.0);
    }
    CHECK(s.hash() == before);
  }
}

TEST_CASE("adam first step moves by the learning rate") {
  ParamStore s;
  s.add("w", Matrix::Zero(1, 2));
  s.at("w").grad << 3.0, -0.5;
  Adam adam;
  adam.step(s, 0.1);
  CHECK(s.at("w").value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(s.at("w").value(0, 1) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("optimizers reduce a quadratic") {
  for (OptimizerKind kind : {OptimizerKind::Adam, OptimizerKind::SgdMomentum}) {
    ParamStore s;
    s.add("w", random_matrix(2, 2, 90));
    const Matrix target = random_matrix(2, 2, 91);
    auto opt = make_optimizer({kind});
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 200; ++i) {
      Tape t;
      const Var loss = nn::mse(t.param(s, "w"), target);
      if (i == 0) first = loss.item();
      last = loss.item();
      t.backward(loss);
      opt->step(s, 0.05);
      s.zero_grad();
    }
    CHECK(last < 1e-3 * first);
  }
}

TEST_CASE("parameter snapshots round-trip") {
  ParamStore s;
  s.add("x/w", random_matrix(3, 5, 100));
  s.add("x/b", random_matrix(1, 5, 101));
  const auto path = std::filesystem::temp_directory_path() / "flashnas_params_roundtrip.bin";
  s.save(path);
  const ParamStore r = ParamStore::read(path);
  CHECK(r.size() == 2);
  CHECK(r.hash() == s.hash());
  ParamStore other;
  other.add("x/w", Matrix::Zero(3, 5));
  other.add("x/b", Matrix::Zero(1, 5));
  other.load(path);
  CHECK(other.hash() == s.hash());
  ParamStore wrong;
  wrong.add("x/w", Matrix::Zero(5, 3));
  wrong.add("x/b", Matrix::Zero(1, 5));
  CHECK_THROWS(wrong.load(path));
  std::filesystem::remove(path);
}

TEST_CASE("parameter store bookkeeping") {
  ParamStore s;
  s.add("block1/w", Matrix::Zero(2, 3));
  s.add("block2/w", Matrix::Zero(4, 1));
  CHECK(s.scalar_count() == 10);
  CHECK(s.scalar_count("block1/") == 6);
  CHECK_THROWS_AS(s.add("block1/w", Matrix::Zero(1, 1)), std::invalid_argument);
  CHECK_FALSE(s.has("block3/w"));
  CHECK_THROWS(s.id("block3/w"));
}
