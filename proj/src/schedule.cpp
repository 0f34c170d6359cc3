#include "scoreaug/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace scoreaug {

double DiffusionSchedule::scale(double t) const {
  if (formulation == Formulation::ve) return 1.0;
  return std::exp(-0.25 * vp_beta_d * t * t - 0.5 * vp_beta_min * t);
}

double DiffusionSchedule::sigma(double t) const {
  if (formulation == Formulation::ve) return std::sqrt(t);
  return std::sqrt(std::expm1(0.5 * vp_beta_d * t * t + vp_beta_min * t));
}

DiffusionSchedule make_ve_schedule(double sigma_data) {
  DiffusionSchedule s;
  s.formulation = Formulation::ve;
  s.sigma_data = sigma_data;
  return s;
}

DiffusionSchedule make_vp_schedule(double sigma_data, double beta_d, double beta_min) {
  DiffusionSchedule s;
  s.formulation = Formulation::vp;
  s.sigma_data = sigma_data;
  s.vp_beta_d = beta_d;
  s.vp_beta_min = beta_min;
  return s;
}

Eigen::VectorXd perturb(const Eigen::VectorXd& x0, double sigma, double s,
                        const Eigen::VectorXd& noise) {
  if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be >= 0");
  if (!(s > 0.0)) throw std::invalid_argument("perturb: scale must be > 0");
  return s * x0 + (s * sigma) * noise;
}

double sample_sigma(Rng& rng) {
  return std::exp(-1.2 + 1.2 * rng.normal());
}

double loss_weight(double sigma, double sigma_data) {
  if (!(sigma > 0.0)) throw std::invalid_argument("loss_weight: sigma must be > 0");
  if (!(sigma_data > 0.0)) throw std::invalid_argument("loss_weight: sigma_data must be > 0");
  const double ss = sigma * sigma_data;
  return (sigma * sigma + sigma_data * sigma_data) / (ss * ss);
}

Preconditioning preconditioning(double sigma, double sigma_data) {
  if (!(sigma > 0.0)) throw std::invalid_argument("preconditioning: sigma must be > 0");
  const double sum_sq = sigma * sigma + sigma_data * sigma_data;
  Preconditioning p;
  p.c_skip = sigma_data * sigma_data / sum_sq;
  p.c_out = sigma * sigma_data / std::sqrt(sum_sq);
  p.c_in = 1.0 / std::sqrt(sum_sq);
  p.c_noise = std::log(sigma) / 4.0;
  return p;
}

}  // namespace scoreaug
