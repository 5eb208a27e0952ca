#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flashnas/nnkit.hpp"

namespace flashnas {

struct GradCheckReport {
  bool passed = true;
  double tolerance = 0.0;
  double max_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t checked = 0;

  std::string summary() const;
};

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() gradients with central finite differences for every
/// trainable scalar across `stores`. The error per entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
/// Throws std::invalid_argument above 5,000 trainable scalars.
GradCheckReport grad_check(const std::vector<ParamStore*>& stores, const LossBuilder& loss,
                           double tolerance, double step = 1e-5);

inline GradCheckReport grad_check(ParamStore& store, const LossBuilder& loss, double tolerance,
                                  double step = 1e-5) {
  return grad_check(std::vector<ParamStore*>{&store}, loss, tolerance, step);
}

}  // namespace flashnas
