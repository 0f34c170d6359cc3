#include "scoreaug/oracle.hpp"

#include <cmath>

#include "scoreaug/numerics.hpp"

namespace scoreaug {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_sigma(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("oracle: sigma must be > 0");
}

}  // namespace

Eigen::VectorXd optimal_denoiser(const Eigen::VectorXd& x, double sigma,
                                 const EmpiricalDataset& ds) {
  check_sigma(sigma);
  const int n = ds.count();
  Eigen::VectorXd logw(n);
  for (int i = 0; i < n; ++i) {
    logw(i) = -(x - ds.points.col(i)).squaredNorm() / (2.0 * sigma * sigma);
  }
  return ds.points * softmax_from_log(logw);
}

Eigen::VectorXd score_original(const Eigen::VectorXd& x, double sigma,
                               const EmpiricalDataset& ds) {
  return (optimal_denoiser(x, sigma, ds) - x) / (sigma * sigma);
}

double log_density_original(const Eigen::VectorXd& x, double sigma,
                            const EmpiricalDataset& ds) {
  check_sigma(sigma);
  const int n = ds.count();
  const int d = ds.dim();
  Eigen::VectorXd logs(n);
  for (int i = 0; i < n; ++i) {
    logs(i) = -(x - ds.points.col(i)).squaredNorm() / (2.0 * sigma * sigma);
  }
  return log_sum_exp(logs) - std::log(static_cast<double>(n)) -
         0.5 * d * std::log(kTwoPi * sigma * sigma);
}

double posterior_trace_cov_original(const Eigen::VectorXd& x, double sigma,
                                    const EmpiricalDataset& ds) {
  check_sigma(sigma);
  const int n = ds.count();
  Eigen::VectorXd logw(n);
  for (int i = 0; i < n; ++i) {
    logw(i) = -(x - ds.points.col(i)).squaredNorm() / (2.0 * sigma * sigma);
  }
  const Eigen::VectorXd w = softmax_from_log(logw);
  double second_moment = 0.0;
  for (int i = 0; i < n; ++i) second_moment += w(i) * ds.points.col(i).squaredNorm();
  return second_moment - (ds.points * w).squaredNorm();
}

DegenerateGaussianEval degenerate_gaussian(const LinearOperator& op, double sigma) {
  check_sigma(sigma);
  const Eigen::MatrixXd t = op.materialize();
  const Eigen::MatrixXd gram = t * t.transpose();
  const SymmetricPseudo sp = symmetric_pseudoinverse(gram);
  DegenerateGaussianEval out;
  out.gram = sigma * sigma * gram;
  out.pinv = sp.pinv / (sigma * sigma);
  out.support_projector = sp.projector;
  out.rank = sp.rank;
  out.log_pseudodet = sp.log_pseudodet + 2.0 * sp.rank * std::log(sigma);
  return out;
}

AugmentedOracle::AugmentedOracle(const EmpiricalDataset& ds, const LinearOperator& op) {
  if (op.cols() != ds.dim()) {
    throw std::invalid_argument("AugmentedOracle: operator/dataset dimension mismatch");
  }
  const Eigen::MatrixXd t = op.materialize();
  ypts_ = t * ds.points;
  const SymmetricPseudo sp = symmetric_pseudoinverse(t * t.transpose());
  basis_ = sp.basis;
  eigvals_ = sp.eigenvalues;
  pinv_ = sp.pinv;
  projector_ = sp.projector;
  log_det_gram_ = sp.log_pseudodet;
  rank_ = sp.rank;
  if (rank_ < 1) throw std::invalid_argument("AugmentedOracle: operator has rank 0");
}

double AugmentedOracle::log_pseudodet(double sigma) const {
  return log_det_gram_ + 2.0 * rank_ * std::log(sigma);
}

double AugmentedOracle::support_distance(const Eigen::VectorXd& y) const {
  const Eigen::VectorXd r = y - ypts_.col(0);
  return (r - projector_ * r).norm();
}

void AugmentedOracle::require_in_support(const Eigen::VectorXd& y) const {
  const double tol = 1e-6 * std::max(y.norm(), 1.0);
  const double dist = support_distance(y);
  if (dist > tol) {
    throw OutOfSupportError("point lies outside Im(T): distance " + std::to_string(dist));
  }
}

Eigen::VectorXd AugmentedOracle::posterior_weights(const Eigen::VectorXd& y,
                                                   double sigma) const {
  check_sigma(sigma);
  const int n = static_cast<int>(ypts_.cols());
  Eigen::VectorXd logw(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd r = y - ypts_.col(i);
    // The pseudo-determinant is shared across components and cancels here.
    logw(i) = -r.dot(pinv_ * r) / (2.0 * sigma * sigma);
  }
  return softmax_from_log(logw);
}

Eigen::VectorXd AugmentedOracle::denoise(const Eigen::VectorXd& y, double sigma) const {
  require_in_support(y);
  return ypts_ * posterior_weights(y, sigma);
}

Eigen::VectorXd AugmentedOracle::score(const Eigen::VectorXd& y, double sigma) const {
  return pinv_ * (denoise(y, sigma) - y) / (sigma * sigma);
}

double AugmentedOracle::log_density(const Eigen::VectorXd& y, double sigma) const {
  require_in_support(y);
  check_sigma(sigma);
  const int n = static_cast<int>(ypts_.cols());
  Eigen::VectorXd logs(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd r = y - ypts_.col(i);
    logs(i) = -r.dot(pinv_ * r) / (2.0 * sigma * sigma);
  }
  return log_sum_exp(logs) - std::log(static_cast<double>(n)) -
         0.5 * rank_ * std::log(kTwoPi) - 0.5 * log_pseudodet(sigma);
}

double AugmentedOracle::posterior_trace_cov(const Eigen::VectorXd& y, double sigma) const {
  const Eigen::VectorXd w = posterior_weights(y, sigma);
  double second_moment = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    second_moment += w(i) * ypts_.col(i).squaredNorm();
  }
  return second_moment - (ypts_ * w).squaredNorm();
}

Eigen::VectorXd optimal_denoiser_aug(const Eigen::VectorXd& y, double sigma,
                                     const LinearOperator& op, const EmpiricalDataset& ds) {
  return AugmentedOracle(ds, op).denoise(y, sigma);
}

Eigen::VectorXd score_aug(const Eigen::VectorXd& y, double sigma,
                          const LinearOperator& op, const EmpiricalDataset& ds) {
  return AugmentedOracle(ds, op).score(y, sigma);
}

double log_density_aug(const Eigen::VectorXd& y, double sigma,
                       const LinearOperator& op, const EmpiricalDataset& ds) {
  return AugmentedOracle(ds, op).log_density(y, sigma);
}

}  // namespace scoreaug
