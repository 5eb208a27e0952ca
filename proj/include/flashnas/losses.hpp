#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "flashnas/nnkit.hpp"

namespace flashnas {

inline constexpr double kProbabilityFloor = 1e-12;

/// Attention probabilities for `batch` sequences: rows indexed
/// ((b * heads + h) * seq + s), `seq` key columns, every row a distribution.
struct AttentionTensor {
  Matrix rows;
  int batch = 1;
  int heads = 1;
  int seq = 1;

  /// Throws std::invalid_argument on shape mismatch or a row that is not a
  /// probability distribution (negative entry, or sum off by more than `tol`).
  void validate(double tol = 1e-9) const;
};

/// Brings teacher attention to `heads` student heads: consecutive teacher heads
/// are averaged when the teacher has a multiple of the student count, each
/// teacher head is repeated when the student has a multiple of the teacher
/// count, otherwise the all-head average is repeated.
AttentionTensor match_heads(const AttentionTensor& teacher, int heads);

/// Mean over rows of KL(target_row || prediction_row), natural log, prediction
/// floored at kProbabilityFloor.
template <typename DerivedP, typename DerivedT>
double mean_row_kl(const Eigen::MatrixBase<DerivedP>& prediction, const Eigen::MatrixBase<DerivedT>& target,
                   double floor = kProbabilityFloor) {
  using std::log;
  double total = 0.0;
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      const double t = target(r, c);
      if (t > 0.0) total += t * (log(t) - log(std::max<double>(prediction(r, c), floor)));
    }
  }
  return total / static_cast<double>(target.rows());
}

/// Attention transfer loss between one block's maps: (1 / (S H)) sum_s sum_h
/// KL(teacher || student), averaged over the batch. Throws on sequence-length
/// or head-count mismatch and on rows that are not distributions.
double mha_loss(const AttentionTensor& student, const AttentionTensor& teacher);

/// Feature-map transfer loss: mean squared error over S x N entries.
template <typename DerivedS, typename DerivedT>
double fm_loss(const Eigen::MatrixBase<DerivedS>& student, const Eigen::MatrixBase<DerivedT>& teacher) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols()) {
    throw ShapeError("fm_loss shape mismatch: [" + std::to_string(student.rows()) + ", " +
                     std::to_string(student.cols()) + "] vs [" + std::to_string(teacher.rows()) + ", " +
                     std::to_string(teacher.cols()) + "]");
  }
  return (teacher - student).squaredNorm() / static_cast<double>(student.size());
}

}  // namespace flashnas
