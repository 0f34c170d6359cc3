#include "scoreaug/theorem.hpp"

#include <cmath>
#include <stdexcept>

#include "scoreaug/numerics.hpp"
#include "scoreaug/oracle.hpp"

namespace scoreaug {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kNestedFdStep = 1e-4;
constexpr double kTwoPi = 6.283185307179586476925286766559;

double tanh_deriv(double x, double a) {
  const double th = std::tanh(x);
  return 1.0 + a * (1.0 - th * th);
}

// Inverse of g(x) = x + a*tanh(x) by bisection; g is strictly increasing for
// a > -1 and |g(x) - x| <= |a|.
double invert_tanh_map(double y, double a) {
  double lo = y - std::abs(a) - 1e-9;
  double hi = y + std::abs(a) + 1e-9;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = mid + a * std::tanh(mid);
    if (g < y) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12) break;
  }
  const double x = 0.5 * (lo + hi);
  if (std::abs(x + a * std::tanh(x) - y) > 1e-9) {
    throw std::runtime_error("tanh map inversion failed");
  }
  return x;
}

// Log density of the pushforward mixture sum_i N(T x_i, sigma^2 TT^T) / N,
// with TT^T full rank m.
double pushforward_log_density(const Eigen::MatrixXd& t, const EmpiricalDataset& ds,
                               double sigma, const Eigen::VectorXd& y) {
  const int m = static_cast<int>(t.rows());
  const Eigen::MatrixXd cov = sigma * sigma * (t * t.transpose());
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("pushforward covariance is not positive definite");
  }
  double log_det = 0.0;
  for (int i = 0; i < m; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const Eigen::MatrixXd centers = t * ds.points;
  Eigen::VectorXd logs(centers.cols());
  for (int i = 0; i < centers.cols(); ++i) {
    const Eigen::VectorXd r = y - centers.col(i);
    logs(i) = -0.5 * r.dot(llt.solve(r));
  }
  return log_sum_exp(logs) - std::log(static_cast<double>(centers.cols())) -
         0.5 * m * std::log(kTwoPi) - 0.5 * log_det;
}

VerifyReport finish_report(std::string case_id, int m, int n, double sigma, long work,
                           Eigen::VectorXd lhs, Eigen::VectorXd rhs) {
  VerifyReport rep;
  rep.case_id = std::move(case_id);
  rep.m = m;
  rep.n = n;
  rep.sigma = sigma;
  rep.work = work;
  rep.abs_err = (lhs - rhs).norm();
  rep.rel_err = rep.abs_err / std::max(lhs.norm(), 1e-300);
  rep.lhs = std::move(lhs);
  rep.rhs = std::move(rhs);
  return rep;
}

}  // namespace

SmoothMap make_linear_map(const Eigen::MatrixXd& t) {
  SmoothMap map;
  map.n = static_cast<int>(t.cols());
  map.m = static_cast<int>(t.rows());
  map.kind = MapKind::linear_surjection;
  map.eval = [t](const Eigen::VectorXd& x) { return Eigen::VectorXd(t * x); };
  map.jacobian = [t](const Eigen::VectorXd&) { return t; };
  return map;
}

SmoothMap make_tanh_diffeo(int n, double a) {
  SmoothMap map;
  map.n = n;
  map.m = n;
  map.kind = MapKind::elementwise_diffeo;
  map.diffeo_strength = a;
  map.eval = [a](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.array() + a * x.array().tanh());
  };
  map.jacobian = [n, a](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) j(i, i) = tanh_deriv(x(i), a);
    return j;
  };
  return map;
}

SmoothMap make_projected_tanh(int n, int m, double a) {
  if (m >= n) throw std::invalid_argument("projection-of-diffeo requires m < n");
  SmoothMap map;
  map.n = n;
  map.m = m;
  map.kind = MapKind::projection_of_diffeo;
  map.diffeo_strength = a;
  map.eval = [m, a](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) y(i) = x(i) + a * std::tanh(x(i));
    return y;
  };
  map.jacobian = [n, m, a](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, n);
    for (int i = 0; i < m; ++i) j(i, i) = tanh_deriv(x(i), a);
    return j;
  };
  return map;
}

void validate_smooth_map(const SmoothMap& map, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd ja = map.jacobian(x);
  const Eigen::MatrixXd jf = fd_jacobian(map.eval, x, kFdStep);
  const double rel = (ja - jf).norm() / std::max(jf.norm(), 1e-300);
  if (rel > 1e-4) {
    throw std::runtime_error("analytic Jacobian disagrees with finite differences");
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(ja);
  if (svd.singularValues()(map.m - 1) <= 1e-6) {
    throw std::runtime_error("Jacobian is rank deficient at the test point");
  }
}

VerifyReport verify_linear_surjection(const Eigen::MatrixXd& t, const EmpiricalDataset& ds,
                                      double sigma, const Eigen::VectorXd& y, long n_mc,
                                      Rng& rng) {
  const int m = static_cast<int>(t.rows());
  const int n = static_cast<int>(t.cols());
  if (n_mc < 1000) throw std::invalid_argument("n_mc must be at least 10^3");
  {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(t);
    if (svd.rank() < m) throw std::invalid_argument("T must have full row rank");
  }

  const Eigen::VectorXd lhs = fd_gradient(
      [&](const Eigen::VectorXd& p) { return pushforward_log_density(t, ds, sigma, p); }, y,
      kFdStep);

  // Exact conditional p(x | y): mixture over components with pushforward
  // posterior weights; per component a Gaussian on the fiber {Tx = y} with
  // mean x_i + T^T (TT^T)^{-1} (y - T x_i) and covariance sigma^2 (I - T^+ T).
  const Eigen::MatrixXd gram = t * t.transpose();
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  const Eigen::MatrixXd t_pinv = t.transpose() * llt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd ker_proj = Eigen::MatrixXd::Identity(n, n) - t_pinv * t;

  const Eigen::MatrixXd centers = t * ds.points;
  Eigen::VectorXd logw(centers.cols());
  const Eigen::MatrixXd cov_inv_scale = gram * (sigma * sigma);
  const Eigen::LLT<Eigen::MatrixXd> cov_llt(cov_inv_scale);
  for (int i = 0; i < centers.cols(); ++i) {
    const Eigen::VectorXd r = y - centers.col(i);
    logw(i) = -0.5 * r.dot(cov_llt.solve(r));
  }
  const Eigen::VectorXd weights = softmax_from_log(logw);

  // Component selection by inverse CDF; one uniform plus n normals per draw.
  Eigen::VectorXd cdf(weights.size());
  double acc = 0.0;
  for (int i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    cdf(i) = acc;
  }

  Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eps(n);
  for (long s = 0; s < n_mc; ++s) {
    const double u = rng.uniform01();
    int comp = 0;
    while (comp + 1 < cdf.size() && u > cdf(comp)) ++comp;
    const Eigen::VectorXd mean =
        ds.points.col(comp) + t_pinv * (y - centers.col(comp));
    for (int i = 0; i < n; ++i) eps(i) = rng.normal();
    const Eigen::VectorXd x = mean + sigma * (ker_proj * eps);
    mean_score += score_original(x, sigma, ds);
  }
  mean_score /= static_cast<double>(n_mc);
  const Eigen::VectorXd rhs = llt.solve(t * mean_score);

  return finish_report("linear_surjection", m, n, sigma, n_mc, lhs, rhs);
}

VerifyReport verify_diffeomorphism(const SmoothMap& map, const EmpiricalDataset& ds,
                                   double sigma, const Eigen::VectorXd& y) {
  if (map.kind != MapKind::elementwise_diffeo || map.m != map.n) {
    throw std::invalid_argument("verify_diffeomorphism needs an elementwise diffeomorphism");
  }
  const int n = map.n;
  const double a = map.diffeo_strength;

  const auto invert = [a, n](const Eigen::VectorXd& p) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = invert_tanh_map(p(i), a);
    return x;
  };
  const auto log_density_y = [&](const Eigen::VectorXd& p) {
    const Eigen::VectorXd x = invert(p);
    double log_det = 0.0;
    for (int i = 0; i < n; ++i) log_det += std::log(tanh_deriv(x(i), a));
    return log_density_original(x, sigma, ds) - log_det;
  };

  const Eigen::VectorXd lhs = fd_gradient(log_density_y, y, kFdStep);

  const Eigen::VectorXd x = invert(y);
  const Eigen::VectorXd score_x = score_original(x, sigma, ds);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    const double th = std::tanh(x(i));
    const double deriv = 1.0 + a * (1.0 - th * th);
    // d/dx log(1 + a sech^2) = -2 a sech^2 tanh / (1 + a sech^2)
    const double grad_log_det = -2.0 * a * (1.0 - th * th) * th / deriv;
    rhs(i) = (score_x(i) - grad_log_det) / deriv;
  }

  return finish_report("diffeomorphism", n, n, sigma, 0, lhs, rhs);
}

VerifyReport verify_general(const SmoothMap& map, const EmpiricalDataset& ds, double sigma,
                            const Eigen::VectorXd& y, int grid_resolution) {
  if (map.kind != MapKind::projection_of_diffeo) {
    throw std::invalid_argument("verify_general needs a projection-of-diffeo map");
  }
  if (map.m >= map.n) throw std::invalid_argument("verify_general requires m < n");
  if (map.n > 3) throw std::invalid_argument("verify_general supports n <= 3");
  if (grid_resolution < 64) throw std::invalid_argument("grid resolution below 64 rejected");

  const int n = map.n;
  const int m = map.m;
  const int free_dims = n - m;
  const double a = map.diffeo_strength;

  // Quadrature window covering the mixture mass on the free coordinates.
  double bound = 6.0 * sigma + std::abs(a) + 1.0;
  bound += ds.points.cwiseAbs().maxCoeff();
  const double step = 2.0 * bound / grid_resolution;

  // The fiber over y is axis-aligned: x_k = g^{-1}(y_k) for k < m, the rest free.
  const auto fiber_density_integral = [&](const Eigen::VectorXd& p, Eigen::VectorXd* expectation) {
    Eigen::VectorXd x(n);
    double log_det = 0.0;
    for (int k = 0; k < m; ++k) {
      x(k) = invert_tanh_map(p(k), a);
      log_det += std::log(tanh_deriv(x(k), a));
    }
    double mass = 0.0;
    Eigen::VectorXd accum = Eigen::VectorXd::Zero(n);
    Eigen::VectorXi idx = Eigen::VectorXi::Zero(free_dims);
    const long total = static_cast<long>(std::pow(grid_resolution, free_dims));
    for (long cell = 0; cell < total; ++cell) {
      long rem = cell;
      for (int f = 0; f < free_dims; ++f) {
        idx(f) = static_cast<int>(rem % grid_resolution);
        rem /= grid_resolution;
      }
      for (int f = 0; f < free_dims; ++f) {
        x(m + f) = -bound + (idx(f) + 0.5) * step;
      }
      const double dens = std::exp(log_density_original(x, sigma, ds));
      mass += dens;
      if (expectation) {
        const Eigen::VectorXd score = score_original(x, sigma, ds);
        Eigen::VectorXd integrand(n);
        for (int k = 0; k < m; ++k) {
          const double th = std::tanh(x(k));
          const double deriv = 1.0 + a * (1.0 - th * th);
          const double grad_log_jj = -2.0 * a * (1.0 - th * th) * th / deriv;
          integrand(k) = (score(k) - grad_log_jj) / deriv;
        }
        for (int f = 0; f < free_dims; ++f) integrand(m + f) = 0.0;
        accum += dens * integrand;
      }
    }
    const double cell_volume = std::pow(step, free_dims);
    if (expectation) *expectation = accum / std::max(mass, 1e-300);
    // p_Y(p) = (prod_k 1/g'(x_k)) * integral of p_X over the fiber
    return std::log(mass * cell_volume) - log_det;
  };

  const Eigen::VectorXd lhs = fd_gradient(
      [&](const Eigen::VectorXd& p) { return fiber_density_integral(p, nullptr); }, y, kFdStep);

  Eigen::VectorXd expectation;
  fiber_density_integral(y, &expectation);
  // J^+ has rows 1/g'(x_k) on the first m coordinates and zero elsewhere, so
  // the m-dimensional rhs is the first m entries of the fiber expectation;
  // grad log J is folded into the integrand above.
  const Eigen::VectorXd rhs = expectation.head(m);

  return finish_report("general_projection", m, n, sigma, grid_resolution, lhs, rhs);
}

DivergenceReport divergence_identity_check(const SmoothMap& map, const Eigen::VectorXd& x) {
  const int n = map.n;
  const int m = map.m;

  const auto pinv_t = [&](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
    const Eigen::MatrixXd j = map.jacobian(p);
    const Eigen::MatrixXd gram = j * j.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("Jacobian is rank deficient at the probe point");
    }
    return llt.solve(j);  // (J J^T)^{-1} J = (J^+)^T, m x n
  };

  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd probe = x;
  for (int k = 0; k < n; ++k) {
    probe(k) = x(k) + kNestedFdStep;
    const Eigen::MatrixXd plus = pinv_t(probe);
    probe(k) = x(k) - kNestedFdStep;
    const Eigen::MatrixXd minus = pinv_t(probe);
    probe(k) = x(k);
    lhs += (plus.col(k) - minus.col(k)) / (2.0 * kNestedFdStep);
  }

  const auto log_det_gram = [&](const Eigen::VectorXd& p) {
    const Eigen::MatrixXd j = map.jacobian(p);
    const Eigen::LLT<Eigen::MatrixXd> llt(j * j.transpose());
    double ld = 0.0;
    for (int i = 0; i < m; ++i) ld += 2.0 * std::log(llt.matrixL()(i, i));
    return ld;
  };
  const Eigen::VectorXd grad_log_det = fd_gradient(log_det_gram, x, kNestedFdStep);
  const Eigen::VectorXd rhs = -0.5 * (pinv_t(x) * grad_log_det);

  DivergenceReport rep;
  rep.lhs_vector = lhs;
  rep.rhs_vector = rhs;
  rep.max_abs_err = (lhs - rhs).cwiseAbs().maxCoeff();
  return rep;
}

}  // namespace scoreaug
