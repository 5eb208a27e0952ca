#include "flashnas/nnkit.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace flashnas {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << ", " << m.cols() << ']';
  return os.str();
}

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::item() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(ParamStore& store, ParamId id, bool track) {
  const bool tracked = track && store[id].trainable;
  const auto key = std::make_pair(static_cast<const ParamStore*>(&store), id);
  if (auto it = bound_.find(key); it != bound_.end()) {
    auto& n = nodes_[static_cast<std::size_t>(it->second)];
    if (n.requires_grad == tracked) return Var(this, it->second);
  }
  Node n;
  n.op = "param:" + store[id].name;
  n.value = store[id].value;
  n.requires_grad = tracked;
  if (tracked) {
    n.store = &store;
    n.param = id;
  }
  nodes_.push_back(std::move(n));
  const int idx = static_cast<int>(nodes_.size()) - 1;
  bound_[key] = idx;
  return Var(this, idx);
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  if (!value.allFinite()) {
    throw NonFiniteError(std::string(op), "non-finite output from primitive '" + std::string(op) + "'");
  }
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw std::invalid_argument("operands of '" + n.op + "' live on another tape");
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id_)].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("loss lives on another tape");
  auto& root = nodes_[static_cast<std::size_t>(loss.id_)];
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(root.value));
  if (!root.requires_grad) return;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  root.grad = Matrix::Ones(1, 1);

  for (int i = loss.id_; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
      for (int in : n.inputs) {
        const auto& g = nodes_[static_cast<std::size_t>(in)].grad;
        if (g.size() != 0 && !g.allFinite()) {
          throw NonFiniteError(n.op, "non-finite gradient in backward of '" + n.op + "'");
        }
      }
    }
    if (n.store != nullptr) {
      auto& p = (*n.store)[n.param];
      p.grad += n.grad;
    }
  }
}

namespace nn {

namespace {

void require_same_tape(Var a, Var b, std::string_view op) {
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw ShapeError("matmul shape mismatch: " + shape_str(av) + " x " + shape_str(bv));
  Matrix out = av * bv;
  return a.tape()->record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw ShapeError("add shape mismatch: " + shape_str(av) + " + " + shape_str(bv));
  Matrix out = av + bv;
  return a.tape()->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias, "add_bias");
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw ShapeError("add_bias shape mismatch: " + shape_str(xv) + " + " + shape_str(bv));
  Matrix out = xv.rowwise() + bv.row(0);
  return x.tape()->record("add_bias", std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

Var scale(Var x, double factor) {
  Matrix out = x.value() * factor;
  return x.tape()->record("scale", std::move(out), {x}, [x, factor](Tape& t, const Matrix& g) {
    t.accumulate(x, g * factor);
  });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record("sum", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    const auto& xv = t.value(x);
    t.accumulate(x, Matrix::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

Matrix layernorm_normalize(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

Var layernorm(Var x, Var gain, Var shift, double eps) {
  require_same_tape(x, gain, "layernorm");
  require_same_tape(x, shift, "layernorm");
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  const Matrix& sv = shift.value();
  if (gv.rows() != 1 || gv.cols() != xv.cols() || sv.rows() != 1 || sv.cols() != xv.cols())
    throw ShapeError("layernorm shape mismatch: input " + shape_str(xv) + ", gain " + shape_str(gv) +
                     ", shift " + shape_str(sv));
  const double n = static_cast<double>(xv.cols());
  Matrix xhat(xv.rows(), xv.cols());
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).sum() / n;
    const double var = (xv.row(r).array() - mean).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + sv.row(0).array();
  return x.tape()->record(
      "layernorm", std::move(out), {x, gain, shift},
      [x, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape& t, const Matrix& g) {
        if (t.requires_grad(gain)) t.accumulate(gain, (g.array() * xhat.array()).colwise().sum().matrix());
        if (t.requires_grad(shift)) t.accumulate(shift, g.colwise().sum());
        if (t.requires_grad(x)) {
          const Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).sum() / n;
            const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
            dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
          }
          t.accumulate(x, dx);
        }
      });
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var softmax_rows(Var x) {
  Matrix p = softmax_rows(x.value());
  return x.tape()->record("softmax_rows", p, {x}, [x, p](Tape& t, const Matrix& g) {
    const Eigen::VectorXd dot = (g.array() * p.array()).rowwise().sum();
    t.accumulate(x, (p.array() * (g.array().colwise() - dot.array())).matrix());
  });
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

Var gelu(Var x) {
  Matrix out = x.value().unaryExpr([](double v) { return gelu(v); });
  return x.tape()->record("gelu", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const Matrix d = t.value(x).unaryExpr([inv_sqrt_2pi](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    t.accumulate(x, (g.array() * d.array()).matrix());
  });
}

Var embedding_lookup(Var table, const std::vector<int>& ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tv.rows())
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[r]) + " outside table " + shape_str(tv));
    out.row(static_cast<Eigen::Index>(r)) = tv.row(ids[r]);
  }
  return table.tape()->record("embedding_lookup", std::move(out), {table}, [table, ids](Tape& t, const Matrix& g) {
    const auto& tv = t.value(table);
    Matrix d = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) d.row(ids[r]) += g.row(static_cast<Eigen::Index>(r));
    t.accumulate(table, d);
  });
}

Var gather_rows(Var x, const std::vector<int>& rows) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= xv.rows())
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) + " outside " + shape_str(xv));
    out.row(static_cast<Eigen::Index>(r)) = xv.row(rows[r]);
  }
  return x.tape()->record("gather_rows", std::move(out), {x}, [x, rows](Tape& t, const Matrix& g) {
    const auto& xv = t.value(x);
    Matrix d = Matrix::Zero(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) d.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
    t.accumulate(x, d);
  });
}

Var attention_scores(Var q, Var k, int batch, int seq, int heads) {
  require_same_tape(q, k, "attention_scores");
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  if (qv.rows() != static_cast<Eigen::Index>(batch) * seq || qv.rows() != kv.rows() ||
      qv.cols() != kv.cols() || qv.cols() % heads != 0)
    throw ShapeError("attention_scores shape mismatch: q " + shape_str(qv) + ", k " + shape_str(kv));
  const int dh = static_cast<int>(qv.cols()) / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(static_cast<Eigen::Index>(batch) * heads * seq, seq);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      out.block((b * heads + h) * seq, 0, seq, seq).noalias() =
          s * qv.block(b * seq, h * dh, seq, dh) * kv.block(b * seq, h * dh, seq, dh).transpose();
    }
  }
  return q.tape()->record("attention_scores", std::move(out), {q, k},
                          [q, k, batch, seq, heads, dh, s](Tape& t, const Matrix& g) {
    const auto& qv = t.value(q);
    const auto& kv = t.value(k);
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const auto gb = g.block((b * heads + h) * seq, 0, seq, seq);
        dq.block(b * seq, h * dh, seq, dh).noalias() = s * gb * kv.block(b * seq, h * dh, seq, dh);
        dk.block(b * seq, h * dh, seq, dh).noalias() = s * gb.transpose() * qv.block(b * seq, h * dh, seq, dh);
      }
    }
    t.accumulate(q, dq);
    t.accumulate(k, dk);
  });
}

Var attention_context(Var probs, Var v, int batch, int seq, int heads) {
  require_same_tape(probs, v, "attention_context");
  const Matrix& pv = probs.value();
  const Matrix& vv = v.value();
  if (pv.rows() != static_cast<Eigen::Index>(batch) * heads * seq || pv.cols() != seq ||
      vv.rows() != static_cast<Eigen::Index>(batch) * seq || vv.cols() % heads != 0)
    throw ShapeError("attention_context shape mismatch: probs " + shape_str(pv) + ", v " + shape_str(vv));
  const int dh = static_cast<int>(vv.cols()) / heads;
  Matrix out(vv.rows(), vv.cols());
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      out.block(b * seq, h * dh, seq, dh).noalias() =
          pv.block((b * heads + h) * seq, 0, seq, seq) * vv.block(b * seq, h * dh, seq, dh);
    }
  }
  return probs.tape()->record("attention_context", std::move(out), {probs, v},
                              [probs, v, batch, seq, heads, dh](Tape& t, const Matrix& g) {
    const auto& pv = t.value(probs);
    const auto& vv = t.value(v);
    Matrix dp(pv.rows(), pv.cols());
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const auto gb = g.block(b * seq, h * dh, seq, dh);
        dp.block((b * heads + h) * seq, 0, seq, seq).noalias() = gb * vv.block(b * seq, h * dh, seq, dh).transpose();
        dv.block(b * seq, h * dh, seq, dh).noalias() = pv.block((b * heads + h) * seq, 0, seq, seq).transpose() * gb;
      }
    }
    t.accumulate(probs, dp);
    t.accumulate(v, dv);
  });
}

Var mix_heads(Var probs, Var mix, int batch, int seq) {
  require_same_tape(probs, mix, "mix_heads");
  const Matrix& pv = probs.value();
  const Matrix& mv = mix.value();
  const int from = static_cast<int>(mv.cols());
  const int to = static_cast<int>(mv.rows());
  if (pv.rows() != static_cast<Eigen::Index>(batch) * from * seq || pv.cols() != seq)
    throw ShapeError("mix_heads shape mismatch: probs " + shape_str(pv) + ", mix " + shape_str(mv));
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch) * to * seq, seq);
  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < to; ++o)
      for (int h = 0; h < from; ++h)
        out.block((b * to + o) * seq, 0, seq, seq) += mv(o, h) * pv.block((b * from + h) * seq, 0, seq, seq);
  return probs.tape()->record("mix_heads", std::move(out), {probs, mix},
                              [probs, mix, batch, seq, from, to](Tape& t, const Matrix& g) {
    const auto& pv = t.value(probs);
    const auto& mv = t.value(mix);
    Matrix dp = Matrix::Zero(pv.rows(), pv.cols());
    Matrix dm = Matrix::Zero(mv.rows(), mv.cols());
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < to; ++o) {
        const auto go = g.block((b * to + o) * seq, 0, seq, seq);
        for (int h = 0; h < from; ++h) {
          dp.block((b * from + h) * seq, 0, seq, seq) += mv(o, h) * go;
          dm(o, h) += go.cwiseProduct(pv.block((b * from + h) * seq, 0, seq, seq)).sum();
        }
      }
    }
    t.accumulate(probs, dp);
    t.accumulate(mix, dm);
  });
}

Var mse(Var prediction, const Matrix& target) {
  const Matrix& pv = prediction.value();
  if (pv.rows() != target.rows() || pv.cols() != target.cols())
    throw ShapeError("mse shape mismatch: " + shape_str(pv) + " vs " + shape_str(target));
  const double n = static_cast<double>(pv.size());
  Matrix diff = pv - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return prediction.tape()->record("mse", std::move(out), {prediction},
                                   [prediction, diff = std::move(diff), n](Tape& t, const Matrix& g) {
    t.accumulate(prediction, diff * (2.0 * g(0, 0) / n));
  });
}

Var kl_rows(Var prediction, const Matrix& target, double floor) {
  const Matrix& pv = prediction.value();
  if (pv.rows() != target.rows() || pv.cols() != target.cols())
    throw ShapeError("kl_rows shape mismatch: " + shape_str(pv) + " vs " + shape_str(target));
  const double rows = static_cast<double>(pv.rows());
  double total = 0.0;
  for (Eigen::Index r = 0; r < pv.rows(); ++r) {
    for (Eigen::Index c = 0; c < pv.cols(); ++c) {
      const double tv = target(r, c);
      if (tv > 0.0) total += tv * (std::log(tv) - std::log(std::max(pv(r, c), floor)));
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total / rows;
  return prediction.tape()->record("kl_rows", std::move(out), {prediction},
                                   [prediction, target, floor, rows](Tape& t, const Matrix& g) {
    const auto& pv = t.value(prediction);
    Matrix d = Matrix::Zero(pv.rows(), pv.cols());
    for (Eigen::Index r = 0; r < pv.rows(); ++r) {
      for (Eigen::Index c = 0; c < pv.cols(); ++c) {
        if (target(r, c) > 0.0 && pv(r, c) > floor) d(r, c) = -target(r, c) / pv(r, c);
      }
    }
    t.accumulate(prediction, d * (g(0, 0) / rows));
  });
}

namespace {

Matrix log_softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const Matrix& lv = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != lv.rows() || lv.rows() == 0)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_str(lv));
  const Matrix logp = log_softmax_rows(lv);
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= lv.cols()) throw ShapeError("cross_entropy: label out of range");
    total -= logp(r, y);
  }
  const double rows = static_cast<double>(lv.rows());
  Matrix out(1, 1);
  out(0, 0) = total / rows;
  return logits.tape()->record("cross_entropy", std::move(out), {logits},
                               [logits, labels, logp, rows](Tape& t, const Matrix& g) {
    Matrix d = logp.array().exp();
    for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    t.accumulate(logits, d * (g(0, 0) / rows));
  });
}

Var soft_cross_entropy(Var logits, const Matrix& target) {
  const Matrix& lv = logits.value();
  if (lv.rows() != target.rows() || lv.cols() != target.cols() || lv.rows() == 0)
    throw ShapeError("soft_cross_entropy shape mismatch: " + shape_str(lv) + " vs " + shape_str(target));
  const Matrix logp = log_softmax_rows(lv);
  const double rows = static_cast<double>(lv.rows());
  Matrix out(1, 1);
  out(0, 0) = -(target.array() * logp.array()).sum() / rows;
  return logits.tape()->record("soft_cross_entropy", std::move(out), {logits},
                               [logits, target, logp, rows](Tape& t, const Matrix& g) {
    const Eigen::VectorXd mass = target.rowwise().sum();
    Matrix d = (logp.array().exp().colwise() * mass.array()).matrix() - target;
    t.accumulate(logits, d * (g(0, 0) / rows));
  });
}

Var bce_with_logits(Var logits, const std::vector<int>& labels) {
  const Matrix& lv = logits.value();
  if (lv.cols() != 1 || static_cast<Eigen::Index>(labels.size()) != lv.rows() || lv.rows() == 0)
    throw ShapeError("bce_with_logits: " + std::to_string(labels.size()) + " labels for logits " + shape_str(lv));
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double z = lv(r, 0);
    const double y = labels[static_cast<std::size_t>(r)];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  const double rows = static_cast<double>(lv.rows());
  Matrix out(1, 1);
  out(0, 0) = total / rows;
  return logits.tape()->record("bce_with_logits", std::move(out), {logits},
                               [logits, labels, rows](Tape& t, const Matrix& g) {
    const auto& lv = t.value(logits);
    Matrix d(lv.rows(), 1);
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      const double sig = 1.0 / (1.0 + std::exp(-lv(r, 0)));
      d(r, 0) = sig - labels[static_cast<std::size_t>(r)];
    }
    t.accumulate(logits, d * (g(0, 0) / rows));
  });
}

}  // namespace nn
}  // namespace flashnas
