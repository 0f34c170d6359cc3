#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "scoreaug/dataset.hpp"
#include "scoreaug/rng.hpp"

namespace scoreaug {

enum class MapKind { linear_surjection, elementwise_diffeo, projection_of_diffeo };

// Differentiable map R^n -> R^m, m <= n, with full row-rank Jacobian on the
// points we test. jacobian is analytic when available.
struct SmoothMap {
  int n = 0;
  int m = 0;
  MapKind kind = MapKind::linear_surjection;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  double diffeo_strength = 0.0;  // the a in x + a*tanh(x), where applicable
};

SmoothMap make_linear_map(const Eigen::MatrixXd& t);
// y_i = x_i + a * tanh(x_i), |a| < 1.
SmoothMap make_tanh_diffeo(int n, double a);
// First m coordinates of the elementwise tanh diffeo.
SmoothMap make_projected_tanh(int n, int m, double a);

// Checks analytic-vs-FD Jacobian agreement and full row rank at x.
void validate_smooth_map(const SmoothMap& map, const Eigen::VectorXd& x);

// Both sides of a score-transformation identity plus their disagreement.
struct VerifyReport {
  std::string case_id;
  int m = 0;
  int n = 0;
  double sigma = 0.0;
  long work = 0;  // MC sample count or grid resolution
  Eigen::VectorXd lhs;
  Eigen::VectorXd rhs;
  double abs_err = 0.0;
  double rel_err = 0.0;
};

// Linear surjection case: grad_y log p(y) = (TT^T)^{-1} T E[grad_x log p(x)].
// lhs by finite differences of the pushforward mixture log density; rhs by
// exact per-component Gaussian conditional sampling on the fiber {Tx = y}.
VerifyReport verify_linear_surjection(const Eigen::MatrixXd& t, const EmpiricalDataset& ds,
                                      double sigma, const Eigen::VectorXd& y, long n_mc,
                                      Rng& rng);

// Global diffeomorphism case: grad_y log p = J^{-T}(grad_x log p - grad_x log|det J|).
// lhs by finite differences of the change-of-variables density; the inverse is
// found by per-coordinate bisection.
VerifyReport verify_diffeomorphism(const SmoothMap& map, const EmpiricalDataset& ds,
                                   double sigma, const Eigen::VectorXd& y);

// General case for projection-of-diffeo maps (n <= 3, m < n): the conditional
// expectation and the marginal are evaluated by quadrature over the fiber.
VerifyReport verify_general(const SmoothMap& map, const EmpiricalDataset& ds, double sigma,
                            const Eigen::VectorXd& y, int grid_resolution);

struct DivergenceReport {
  Eigen::VectorXd lhs_vector;
  Eigen::VectorXd rhs_vector;
  double max_abs_err = 0.0;
};

// Div_rows((J^+)^T) = -(J^+)^T * (1/2) grad_x log det(J J^T), assembled with
// nested central differences (step 1e-4).
DivergenceReport divergence_identity_check(const SmoothMap& map, const Eigen::VectorXd& x);

}  // namespace scoreaug
