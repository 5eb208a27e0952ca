#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "flashnas/params.hpp"

namespace flashnas {

enum class OptimizerKind { Adam, SgdMomentum };

OptimizerKind optimizer_from_name(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
};

/// Updates the trainable parameters of one store from their accumulated gradients.
/// Frozen parameters are skipped entirely (values and moment state untouched).
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamStore& store, double lr) = 0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& store, double lr) override;

 private:
  struct Moments {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  double beta1_, beta2_, eps_;
  std::vector<Moments> state_;
};

class SgdMomentum final : public Optimizer {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}
  void step(ParamStore& store, double lr) override;

 private:
  double momentum_;
  std::vector<Matrix> velocity_;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerSettings& settings);

}  // namespace flashnas
