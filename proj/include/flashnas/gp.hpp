#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace flashnas {

template <typename Scalar>
Scalar normal_pdf(Scalar z) {
  using std::exp;
  return exp(Scalar(-0.5) * z * z) * Scalar(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

template <typename Scalar>
Scalar normal_cdf(Scalar z) {
  using std::erfc;
  return Scalar(0.5) * erfc(-z / Scalar(std::numbers::sqrt2));
}

/// Expected improvement below `best` for a Gaussian with `mean`, `variance` (minimization).
template <typename Scalar>
Scalar expected_improvement(Scalar mean, Scalar variance, Scalar best) {
  using std::sqrt;
  const Scalar sd = sqrt(std::max(variance, Scalar(0)));
  const Scalar gap = best - mean;
  if (sd <= Scalar(0)) return std::max(gap, Scalar(0));
  const Scalar z = gap / sd;
  return gap * normal_cdf(z) + sd * normal_pdf(z);
}

template <typename Scalar>
Scalar matern52(Scalar r, Scalar lengthscale) {
  using std::exp;
  using std::sqrt;
  const Scalar a = sqrt(Scalar(5)) * r / lengthscale;
  return (Scalar(1) + a + a * a / Scalar(3)) * exp(-a);
}

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact GP regression with a Matern-5/2 kernel (one shared lengthscale),
/// constant mean equal to the target mean, and Gaussian observation noise.
template <typename Scalar>
class GaussianProcess {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Hyper {
    Scalar lengthscale = Scalar(0.3);
    Scalar signal_variance = Scalar(1);
    Scalar noise_variance = Scalar(1e-6);
  };

  struct Grid {
    std::vector<Scalar> lengthscales{0.05, 0.1, 0.15, 0.2, 0.3, 0.45, 0.7, 1.0, 1.5, 2.5};
    /// Noise as a fraction of the signal variance.
    std::vector<Scalar> noise_ratios{1e-6, 1e-3, 1e-1};
  };

  static constexpr Scalar kMaxJitter = Scalar(1e-6);

  /// Rows of `x` are inputs.
  void fit(const Mat& x, const Vec& y, const Hyper& hyper) {
    if (x.rows() < 1 || x.rows() != y.size()) throw std::invalid_argument("gp_fit needs >= 1 matching observation");
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("gp_fit inputs must be finite");
    x_ = x;
    hyper_ = hyper;
    mean_ = y.mean();
    const Vec centered = y.array() - mean_;
    Mat k = kernel(x_, x_);
    k.diagonal().array() += hyper_.noise_variance;
    jitter_ = Scalar(0);
    Scalar jitter = Scalar(1e-12);
    for (;;) {
      Mat kj = k;
      kj.diagonal().array() += jitter_;
      llt_.compute(kj);
      if (llt_.info() == Eigen::Success) break;
      if (jitter > kMaxJitter) throw NotPositiveDefinite("kernel matrix not positive definite up to jitter 1e-6");
      jitter_ = jitter * hyper_.signal_variance;
      jitter *= Scalar(10);
    }
    alpha_ = llt_.solve(centered);
    using std::log;
    const Mat& l = llt_.matrixLLT();
    Scalar log_det = Scalar(0);
    for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += log(l(i, i));
    lml_ = Scalar(-0.5) * centered.dot(alpha_) - log_det -
           Scalar(0.5) * static_cast<Scalar>(y.size()) * log(Scalar(2) * Scalar(std::numbers::pi));
  }

  /// Picks the hyperparameters with the largest log marginal likelihood;
  /// the signal variance is the target variance (1 when constant).
  void fit_grid(const Mat& x, const Vec& y, const Grid& grid = {}) {
    const Scalar var = y.size() > 1 ? (y.array() - y.mean()).square().sum() / static_cast<Scalar>(y.size()) : Scalar(0);
    const Scalar sf2 = var > Scalar(1e-12) ? var : Scalar(1);
    Hyper best;
    Scalar best_lml = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Scalar l : grid.lengthscales) {
      for (Scalar r : grid.noise_ratios) {
        const Hyper h{l, sf2, r * sf2};
        try {
          fit(x, y, h);
        } catch (const NotPositiveDefinite&) {
          continue;
        }
        if (!any || lml_ > best_lml) {
          best_lml = lml_;
          best = h;
          any = true;
        }
      }
    }
    if (!any) throw NotPositiveDefinite("no grid hyperparameters gave a positive-definite kernel");
    fit(x, y, best);
  }

  /// Posterior mean and latent variance at each row of `q`.
  std::pair<Vec, Vec> posterior(const Mat& q) const {
    const Mat ks = kernel(q, x_);
    Vec mean = (ks * alpha_).array() + mean_;
    const Mat v = llt_.matrixL().solve(ks.transpose());
    Vec var = (hyper_.signal_variance - v.colwise().squaredNorm().array()).matrix();
    var = var.cwiseMax(Scalar(0));
    return {mean, var};
  }

  std::pair<Scalar, Scalar> posterior_at(const Vec& x) const {
    const auto [m, v] = posterior(x.transpose());
    return {m(0), v(0)};
  }

  const Hyper& hyper() const { return hyper_; }
  Scalar log_marginal_likelihood() const { return lml_; }
  Scalar jitter() const { return jitter_; }
  Scalar prior_mean() const { return mean_; }

 private:
  Mat kernel(const Mat& a, const Mat& b) const {
    Mat k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        k(i, j) = hyper_.signal_variance * matern52<Scalar>((a.row(i) - b.row(j)).norm(), hyper_.lengthscale);
    return k;
  }

  Mat x_;
  Hyper hyper_;
  Scalar mean_ = Scalar(0);
  Scalar jitter_ = Scalar(0);
  Scalar lml_ = Scalar(0);
  Eigen::LLT<Mat> llt_;
  Vec alpha_;
};

}  // namespace flashnas
