#pragma once

#include <Eigen/Dense>

#include "scoreaug/rng.hpp"

namespace scoreaug {

enum class Formulation { ve, vp };

// Noise schedule. VE: s(t)=1, sigma(t)=sqrt(t). VP: sigma(t) from the EDM
// beta parameterization, s(t) fixed by s^2 + s^2 sigma^2 = 1.
struct DiffusionSchedule {
  Formulation formulation = Formulation::ve;
  double sigma_data = 0.5;
  double t_min = 1e-5;  // floor keeps sigma(t) away from 0
  double t_max = 1.0;
  double vp_beta_d = 19.9;
  double vp_beta_min = 0.1;

  double scale(double t) const;  // s(t)
  double sigma(double t) const;
  double sigma_min() const { return sigma(t_min); }
  double sigma_max() const { return sigma(t_max); }
};

DiffusionSchedule make_ve_schedule(double sigma_data);
DiffusionSchedule make_vp_schedule(double sigma_data, double beta_d = 19.9,
                                   double beta_min = 0.1);

// Forward process draw: s*x0 + s*sigma*noise.
Eigen::VectorXd perturb(const Eigen::VectorXd& x0, double sigma, double s,
                        const Eigen::VectorXd& noise);

// Noise-level prior: ln(sigma) ~ Normal(-1.2, 1.2^2).
double sample_sigma(Rng& rng);

// lambda(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
double loss_weight(double sigma, double sigma_data);

struct Preconditioning {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
};

Preconditioning preconditioning(double sigma, double sigma_data);

}  // namespace scoreaug
