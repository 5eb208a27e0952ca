#include "flashnas/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flashnas {

OptimizerKind optimizer_from_name(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd" || name == "sgd_momentum") return OptimizerKind::SgdMomentum;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd_momentum";
}

void Adam::step(ParamStore& store, double lr) {
  if (state_.size() < static_cast<std::size_t>(store.size())) state_.resize(static_cast<std::size_t>(store.size()));
  for (ParamId id = 0; id < store.size(); ++id) {
    auto& p = store[id];
    if (!p.trainable) continue;
    auto& s = state_[static_cast<std::size_t>(id)];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p.value.rows(), p.value.cols());
      s.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    ++s.t;
    s.m = beta1_ * s.m + (1.0 - beta1_) * p.grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    p.value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

void SgdMomentum::step(ParamStore& store, double lr) {
  if (velocity_.size() < static_cast<std::size_t>(store.size())) velocity_.resize(static_cast<std::size_t>(store.size()));
  for (ParamId id = 0; id < store.size(); ++id) {
    auto& p = store[id];
    if (!p.trainable) continue;
    auto& vel = velocity_[static_cast<std::size_t>(id)];
    if (vel.size() == 0) vel = Matrix::Zero(p.value.rows(), p.value.cols());
    vel = momentum_ * vel + p.grad;
    p.value -= lr * vel;
  }
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerSettings& s) {
  if (s.kind == OptimizerKind::Adam) return std::make_unique<Adam>(s.beta1, s.beta2, s.eps);
  return std::make_unique<SgdMomentum>(s.momentum);
}

}  // namespace flashnas
