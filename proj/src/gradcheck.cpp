#include "flashnas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flashnas {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << ": " << checked << " entries, max error " << max_error
     << " (tolerance " << tolerance << ")";
  if (!worst_param.empty()) {
    os << ", worst " << worst_param << '[' << worst_index << "] analytic " << worst_analytic
       << " numeric " << worst_numeric;
  }
  return os.str();
}

GradCheckReport grad_check(const std::vector<ParamStore*>& stores, const LossBuilder& loss,
                           double tolerance, double step) {
  std::int64_t n = 0;
  for (auto* s : stores) n += s->trainable_scalar_count();
  if (n > 5000) throw std::invalid_argument("grad_check fragment has " + std::to_string(n) + " > 5000 parameters");

  for (auto* s : stores) s->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }

  auto eval = [&loss] {
    Tape tape;
    return loss(tape).item();
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto* s : stores) {
    for (auto& p : *s) {
      if (!p.trainable) continue;
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        double& x = p.value.data()[i];
        const double saved = x;
        x = saved + step;
        const double up = eval();
        x = saved - step;
        const double down = eval();
        x = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = p.grad.data()[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
        const double err = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (err > report.max_error || report.worst_param.empty()) {
          report.max_error = err;
          report.worst_param = p.name;
          report.worst_index = i;
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_error < tolerance;
  return report;
}

}  // namespace flashnas
