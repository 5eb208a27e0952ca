#include "flashnas/model.hpp"

#include <cmath>
#include <stdexcept>

namespace flashnas {

ModelShape ModelShape::from(const ArchitectureConfig& c, const DesignSpace& space) {
  space.validate(c);
  ModelShape s;
  s.vocab_size = space.vocab_size();
  s.seq_len = space.seq_len();
  s.embed_dim = space.embed_dim();
  s.hidden_size = c.hidden_size;
  s.bottleneck_size = c.bottleneck_size;
  s.attention_heads = c.attention_heads;
  s.intermediate_size = c.intermediate_size;
  s.stacked_ff = c.stacked_ff;
  s.depth = c.depth;
  return s;
}

ArchitectureConfig ModelShape::architecture() const {
  return {hidden_size, bottleneck_size, attention_heads, intermediate_size, stacked_ff, depth};
}

void ModelShape::validate() const {
  if (vocab_size <= 0 || seq_len <= 0 || embed_dim <= 0 || hidden_size <= 0 || bottleneck_size <= 0 ||
      attention_heads <= 0 || intermediate_size <= 0 || stacked_ff <= 0 || depth <= 0)
    throw std::invalid_argument("model widths must be positive");
  if (bottleneck_size % attention_heads != 0)
    throw std::invalid_argument("bottleneck_size must be divisible by attention_heads");
}

Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z = normal(rng);
    while (std::abs(z) > 2.0) z = normal(rng);
    m.data()[i] = z * stddev;
  }
  return m;
}

std::string_view init_scheme_name(InitScheme s) { return s == InitScheme::FanIn ? "fan_in" : "fixed"; }

InitScheme init_scheme_from_name(std::string_view name) {
  if (name == "fan_in") return InitScheme::FanIn;
  if (name == "fixed") return InitScheme::Fixed;
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

TransformerModel::TransformerModel(ModelShape shape, std::uint64_t seed, InitScheme init) : shape_(shape) {
  shape_.validate();
  auto rng = make_rng({seed, 0x1417ull});
  constexpr double kFixedStd = 0.02;
  const bool fan_in = init == InitScheme::FanIn;
  auto std_for = [&](int in) { return fan_in ? 1.0 / std::sqrt(static_cast<double>(in)) : kFixedStd; };
  const int e = shape_.embed_dim;
  const int h = shape_.hidden_size;
  const int b = shape_.bottleneck_size;
  const int f = shape_.intermediate_size;

  auto dense = [&](const std::string& prefix, int in, int out) {
    params_.add(prefix + "_w", truncated_normal(in, out, std_for(in), rng));
    params_.add(prefix + "_b", Matrix::Zero(1, out));
  };
  auto norm = [&](const std::string& prefix, int width) {
    params_.add(prefix + "_g", Matrix::Ones(1, width));
    params_.add(prefix + "_b", Matrix::Zero(1, width));
  };

  params_.add("embedding/table", truncated_normal(shape_.vocab_size, e, fan_in ? 1.0 : kFixedStd, rng));
  if (e != h) dense("embedding/resize", e, h);
  for (int k = 1; k <= shape_.depth; ++k) {
    const std::string p = block_prefix(k);
    dense(p + "q", h, b);
    dense(p + "k", h, b);
    dense(p + "v", h, b);
    dense(p + "o", b, b);
    norm(p + "ln_attn", b);
    for (int i = 1; i <= shape_.stacked_ff; ++i) {
      const std::string ff = p + "ff" + std::to_string(i) + "/";
      dense(ff + "in", b, f);
      dense(ff + "out", f, b);
    }
    dense(p + "out", b, h);
    norm(p + "ln_out", h);
  }
  dense("head/mlm", h, shape_.vocab_size);
  dense("head/nsp", h, 1);

  positions_.resize(shape_.seq_len, e);
  for (int s = 0; s < shape_.seq_len; ++s) {
    for (int i = 0; i < e; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(e));
      positions_(s, i) = (i % 2 == 0) ? std::sin(s * rate) : std::cos(s * rate);
    }
  }
}

std::int64_t TransformerModel::backbone_param_count() const {
  return params_.scalar_count("embedding/") + params_.scalar_count("block");
}

Var TransformerModel::block(Tape& tape, Var x, int k, int batch, int seq, bool track, Var* attention) {
  const std::string p = block_prefix(k);
  auto w = [&](const std::string& name) { return tape.param(params_, p + name, track); };
  auto dense = [&](Var in, const std::string& name) {
    return nn::add_bias(nn::matmul(in, w(name + "_w")), w(name + "_b"));
  };

  const Var q = dense(x, "q");
  const Var kk = dense(x, "k");
  const Var v = dense(x, "v");
  const Var probs = nn::softmax_rows(nn::attention_scores(q, kk, batch, seq, shape_.attention_heads));
  if (attention != nullptr) *attention = probs;
  const Var ctx = nn::attention_context(probs, v, batch, seq, shape_.attention_heads);
  Var y = nn::layernorm(nn::add(dense(ctx, "o"), v), w("ln_attn_g"), w("ln_attn_b"));
  for (int i = 1; i <= shape_.stacked_ff; ++i) {
    const std::string ff = "ff" + std::to_string(i) + "/";
    y = nn::add(y, dense(nn::gelu(dense(y, ff + "in")), ff + "out"));
  }
  return nn::layernorm(nn::add(dense(y, "out"), x), w("ln_out_g"), w("ln_out_b"));
}

ForwardPass TransformerModel::forward(Tape& tape, const TokenBatch& batch, int n_blocks, bool track) {
  if (batch.seq != shape_.seq_len)
    throw ShapeError("batch sequence length " + std::to_string(batch.seq) + " differs from model " +
                     std::to_string(shape_.seq_len));
  if (n_blocks < 0 || n_blocks > shape_.depth) n_blocks = shape_.depth;

  ForwardPass out;
  out.batch = batch.batch;
  out.seq = batch.seq;

  Matrix pos(static_cast<Eigen::Index>(batch.batch) * batch.seq, shape_.embed_dim);
  for (int b = 0; b < batch.batch; ++b) pos.block(b * batch.seq, 0, batch.seq, shape_.embed_dim) = positions_;

  Var x = nn::add(nn::embedding_lookup(tape.param(params_, "embedding/table", track), batch.tokens),
                  tape.constant(std::move(pos)));
  if (shape_.embed_dim != shape_.hidden_size) {
    x = nn::add_bias(nn::matmul(x, tape.param(params_, "embedding/resize_w", track)),
                     tape.param(params_, "embedding/resize_b", track));
  }
  for (int k = 1; k <= n_blocks; ++k) {
    Var attn;
    x = block(tape, x, k, batch.batch, batch.seq, track, &attn);
    out.attention.push_back(attn);
    out.features.push_back(x);
  }
  out.output = x;
  return out;
}

Var TransformerModel::mlm_logits(Tape& tape, Var hidden, const std::vector<int>& rows, bool track) {
  return nn::add_bias(nn::matmul(nn::gather_rows(hidden, rows), tape.param(params_, "head/mlm_w", track)),
                      tape.param(params_, "head/mlm_b", track));
}

Var TransformerModel::nsp_logits(Tape& tape, Var hidden, int batch, int seq, bool track) {
  std::vector<int> cls(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) cls[static_cast<std::size_t>(b)] = b * seq;
  return nn::add_bias(nn::matmul(nn::gather_rows(hidden, cls), tape.param(params_, "head/nsp_w", track)),
                      tape.param(params_, "head/nsp_b", track));
}

// Untracked passes bind parameters as constants and never write to the store.
ForwardPass TransformerModel::forward(Tape& tape, const TokenBatch& batch, int n_blocks) const {
  return const_cast<TransformerModel*>(this)->forward(tape, batch, n_blocks, false);
}

Var TransformerModel::mlm_logits(Tape& tape, Var hidden, const std::vector<int>& rows) const {
  return const_cast<TransformerModel*>(this)->mlm_logits(tape, hidden, rows, false);
}

Var TransformerModel::nsp_logits(Tape& tape, Var hidden, int batch, int seq) const {
  return const_cast<TransformerModel*>(this)->nsp_logits(tape, hidden, batch, seq, false);
}

}  // namespace flashnas
