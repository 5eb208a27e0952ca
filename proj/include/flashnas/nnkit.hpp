#pragma once

#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flashnas/params.hpp"

namespace flashnas {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared; `op` names the primitive that produced it.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

std::string shape_str(const Matrix& m);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording of kit primitives. One tape per forward/backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a stored parameter. Untracked when `track` is false or the
  /// parameter is frozen; tracked leaves receive gradients in backward().
  Var param(ParamStore& store, ParamId id, bool track = true);
  Var param(ParamStore& store, std::string_view name, bool track = true) {
    return param(store, store.id(name), track);
  }

  /// Adds a node computed by primitive `op`. Throws NonFiniteError if `value`
  /// has non-finite entries.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }
  /// Gradient of the last backward() root w.r.t. `v`; empty when unreached.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[static_cast<std::size_t>(v.id_)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Propagates from a 1x1 loss and adds parameter gradients into their stores.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    std::vector<int> inputs;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    ParamId param = -1;
  };
  std::deque<Node> nodes_;
  std::map<std::pair<const ParamStore*, ParamId>, int> bound_;
};

namespace nn {

// Forward primitives. Each registers its backward rule on the operands' tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var sum(Var x);
Var layernorm(Var x, Var gain, Var shift, double eps = 1e-12);
Var softmax_rows(Var x);
Var gelu(Var x);
Var embedding_lookup(Var table, const std::vector<int>& ids);
Var gather_rows(Var x, const std::vector<int>& rows);

/// Per-(sequence, head) scaled dot products. q and k are (batch*seq) x (heads*d_head);
/// the result stacks one seq x seq score block per (sequence, head), row index
/// ((b * heads + h) * seq + i).
Var attention_scores(Var q, Var k, int batch, int seq, int heads);
/// Inverse layout of attention_scores: probabilities times values, heads concatenated.
Var attention_context(Var probs, Var v, int batch, int seq, int heads);
/// Mixes per-head attention blocks: output head o = sum_h mix(o, h) * head h.
/// `mix` is heads_out x heads_in; rows of a stochastic `mix` keep rows distributions.
Var mix_heads(Var probs, Var mix, int batch, int seq);

// Losses (all 1x1 means).
Var mse(Var prediction, const Matrix& target);
/// Mean over rows of KL(target_row || prediction_row); prediction floored at `floor`.
Var kl_rows(Var prediction, const Matrix& target, double floor = 1e-12);
Var cross_entropy(Var logits, const std::vector<int>& labels);
/// Mean over rows of -sum_c target_c log softmax(logits)_c.
Var soft_cross_entropy(Var logits, const Matrix& target);
/// Binary cross-entropy on a single-column logit matrix.
Var bce_with_logits(Var logits, const std::vector<int>& labels);

// Plain (tape-free) helpers shared by the primitives and evaluation code.
Matrix softmax_rows(const Matrix& x);
Matrix layernorm_normalize(const Matrix& x, double eps = 1e-12);
double gelu(double x);

}  // namespace nn
}  // namespace flashnas
