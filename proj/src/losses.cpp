#include "flashnas/losses.hpp"

namespace flashnas {

void AttentionTensor::validate(double tol) const {
  if (rows.rows() != static_cast<Eigen::Index>(batch) * heads * seq || rows.cols() != seq)
    throw std::invalid_argument("attention tensor " + shape_str(rows) + " does not match batch " +
                                std::to_string(batch) + ", heads " + std::to_string(heads) + ", seq " +
                                std::to_string(seq));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    if ((rows.row(r).array() < 0.0).any() || std::abs(rows.row(r).sum() - 1.0) > tol)
      throw std::invalid_argument("attention row " + std::to_string(r) + " is not a probability distribution");
  }
}

AttentionTensor match_heads(const AttentionTensor& teacher, int heads) {
  if (teacher.heads == heads) return teacher;
  const int s = teacher.seq;
  AttentionTensor out;
  out.batch = teacher.batch;
  out.heads = heads;
  out.seq = s;
  out.rows = Matrix::Zero(static_cast<Eigen::Index>(teacher.batch) * heads * s, s);
  auto block = [s](const Matrix& m, int batch_heads, int b, int h) {
    return m.block((b * batch_heads + h) * s, 0, s, s);
  };
  for (int b = 0; b < teacher.batch; ++b) {
    if (teacher.heads % heads == 0) {
      const int group = teacher.heads / heads;
      for (int h = 0; h < heads; ++h) {
        Matrix acc = Matrix::Zero(s, s);
        for (int g = 0; g < group; ++g) acc += block(teacher.rows, teacher.heads, b, h * group + g);
        out.rows.block((b * heads + h) * s, 0, s, s) = acc / group;
      }
    } else if (heads % teacher.heads == 0) {
      const int rep = heads / teacher.heads;
      for (int h = 0; h < heads; ++h)
        out.rows.block((b * heads + h) * s, 0, s, s) = block(teacher.rows, teacher.heads, b, h / rep);
    } else {
      Matrix acc = Matrix::Zero(s, s);
      for (int h = 0; h < teacher.heads; ++h) acc += block(teacher.rows, teacher.heads, b, h);
      acc /= teacher.heads;
      for (int h = 0; h < heads; ++h) out.rows.block((b * heads + h) * s, 0, s, s) = acc;
    }
  }
  return out;
}

double mha_loss(const AttentionTensor& student, const AttentionTensor& teacher) {
  if (student.seq != teacher.seq)
    throw std::invalid_argument("mha_loss: sequence length " + std::to_string(student.seq) + " vs " +
                                std::to_string(teacher.seq));
  if (student.heads != teacher.heads || student.batch != teacher.batch)
    throw std::invalid_argument("mha_loss: head/batch layout differs; apply match_heads first");
  student.validate();
  teacher.validate();
  return mean_row_kl(student.rows, teacher.rows);
}

}  // namespace flashnas
