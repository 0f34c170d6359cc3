#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace scoreaug {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Softmax in log space; safe for widely spread log weights.
inline Eigen::VectorXd softmax_from_log(const Eigen::VectorXd& logw) {
  const double m = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - m).exp();
  return w / w.sum();
}

// Eigendecomposition-backed pseudoinverse bundle for a symmetric PSD matrix.
// rank counts eigenvalues above tol_factor * lambda_max.
struct SymmetricPseudo {
  Eigen::MatrixXd pinv;
  Eigen::MatrixXd projector;     // onto the range
  Eigen::MatrixXd basis;         // orthonormal columns spanning the range
  Eigen::VectorXd eigenvalues;   // the kept (nonzero) eigenvalues
  int rank = 0;
  double log_pseudodet = 0.0;    // sum of log kept eigenvalues
};

inline SymmetricPseudo symmetric_pseudoinverse(const Eigen::MatrixXd& g,
                                               double tol_factor = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  const int d = static_cast<int>(g.rows());
  const double lambda_max = vals.size() > 0 ? vals(d - 1) : 0.0;
  const double tol = tol_factor * std::max(lambda_max, 0.0);

  SymmetricPseudo out;
  std::vector<int> keep;
  for (int i = 0; i < d; ++i) {
    if (vals(i) > tol) keep.push_back(i);
  }
  out.rank = static_cast<int>(keep.size());
  out.basis.resize(d, out.rank);
  out.eigenvalues.resize(out.rank);
  for (int k = 0; k < out.rank; ++k) {
    out.basis.col(k) = vecs.col(keep[k]);
    out.eigenvalues(k) = vals(keep[k]);
    out.log_pseudodet += std::log(vals(keep[k]));
  }
  out.pinv = out.basis * out.eigenvalues.cwiseInverse().asDiagonal() *
             out.basis.transpose();
  out.projector = out.basis * out.basis.transpose();
  return out;
}

using ScalarField = std::function<double(const Eigen::VectorXd&)>;
using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const ScalarField& f, const Eigen::VectorXd& x,
                                   double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double fp = f(probe);
    probe(i) = x(i) - step;
    const double fm = f(probe);
    probe(i) = x(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Central finite-difference Jacobian of an R^n -> R^m map.
inline Eigen::MatrixXd fd_jacobian(const VectorField& f, const Eigen::VectorXd& x,
                                   double step) {
  Eigen::VectorXd probe = x;
  probe(0) = x(0) + step;
  Eigen::VectorXd fp = f(probe);
  probe(0) = x(0) - step;
  Eigen::VectorXd fm = f(probe);
  probe(0) = x(0);
  Eigen::MatrixXd jac(fp.size(), x.size());
  jac.col(0) = (fp - fm) / (2.0 * step);
  for (int i = 1; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    fp = f(probe);
    probe(i) = x(i) - step;
    fm = f(probe);
    probe(i) = x(i);
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x,
                            const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

inline double relative_error(const Eigen::VectorXd& approx,
                             const Eigen::VectorXd& exact) {
  const double denom = std::max(exact.norm(), 1e-300);
  return (approx - exact).norm() / denom;
}

}  // namespace scoreaug
