#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "scoreaug/dataset.hpp"
#include "scoreaug/transforms.hpp"

namespace scoreaug {

struct OutOfSupportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Posterior mean of the Gaussian-smoothed Dirac mixture:
// sum_i w_i x_i with w_i proportional to exp(-|x - x_i|^2 / (2 sigma^2)).
Eigen::VectorXd optimal_denoiser(const Eigen::VectorXd& x, double sigma,
                                 const EmpiricalDataset& ds);

// (D(x; sigma) - x) / sigma^2.
Eigen::VectorXd score_original(const Eigen::VectorXd& x, double sigma,
                               const EmpiricalDataset& ds);

// Log density of the mixture sum_i N(x_i, sigma^2 I) / N.
double log_density_original(const Eigen::VectorXd& x, double sigma,
                            const EmpiricalDataset& ds);

// tr Cov(x0 | x) of the mixture posterior: the pointwise denoising-loss floor.
double posterior_trace_cov_original(const Eigen::VectorXd& x, double sigma,
                                    const EmpiricalDataset& ds);

// Spectral data of the (possibly singular) covariance sigma^2 T T^T.
struct DegenerateGaussianEval {
  Eigen::MatrixXd gram;               // sigma^2 T T^T
  Eigen::MatrixXd pinv;               // its Moore-Penrose inverse
  Eigen::MatrixXd support_projector;  // onto Im(T)
  int rank = 0;
  double log_pseudodet = 0.0;
};

DegenerateGaussianEval degenerate_gaussian(const LinearOperator& op, double sigma);

// Closed-form oracle over the transformed point set {T x_i}. Precomputes the
// eigendecomposition of T T^T once; evaluations are pure and thread-safe.
class AugmentedOracle {
 public:
  AugmentedOracle(const EmpiricalDataset& ds, const LinearOperator& op);

  int rank() const { return rank_; }
  const Eigen::MatrixXd& transformed_points() const { return ypts_; }
  const Eigen::MatrixXd& support_basis() const { return basis_; }
  const Eigen::MatrixXd& support_projector() const { return projector_; }
  const Eigen::MatrixXd& gram_pinv() const { return pinv_; }
  double log_pseudodet(double sigma) const;

  // Distance from y to the affine support {y_1 + Im(T)}.
  double support_distance(const Eigen::VectorXd& y) const;
  void require_in_support(const Eigen::VectorXd& y) const;

  Eigen::VectorXd posterior_weights(const Eigen::VectorXd& y, double sigma) const;
  Eigen::VectorXd denoise(const Eigen::VectorXd& y, double sigma) const;
  Eigen::VectorXd score(const Eigen::VectorXd& y, double sigma) const;
  double log_density(const Eigen::VectorXd& y, double sigma) const;

  // tr Cov(y_0 | y): the pointwise denoising-loss floor at (y, sigma).
  double posterior_trace_cov(const Eigen::VectorXd& y, double sigma) const;

 private:
  Eigen::MatrixXd ypts_;       // d x N transformed points
  Eigen::MatrixXd basis_;      // d x r orthonormal basis of Im(T)
  Eigen::VectorXd eigvals_;    // kept eigenvalues of T T^T
  Eigen::MatrixXd pinv_;       // (T T^T)^+
  Eigen::MatrixXd projector_;  // basis * basis^T
  double log_det_gram_ = 0.0;  // sum log kept eigenvalues of T T^T
  int rank_ = 0;
};

// Free-function wrappers; each builds the oracle on the fly.
Eigen::VectorXd optimal_denoiser_aug(const Eigen::VectorXd& y, double sigma,
                                     const LinearOperator& op, const EmpiricalDataset& ds);
Eigen::VectorXd score_aug(const Eigen::VectorXd& y, double sigma,
                          const LinearOperator& op, const EmpiricalDataset& ds);
double log_density_aug(const Eigen::VectorXd& y, double sigma,
                       const LinearOperator& op, const EmpiricalDataset& ds);

}  // namespace scoreaug
