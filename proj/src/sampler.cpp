#include "scoreaug/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "scoreaug/oracle.hpp"

namespace scoreaug {

std::vector<double> sigma_steps(const SamplerConfig& cfg) {
  if (cfg.n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (!(cfg.sigma_max > cfg.sigma_min && cfg.sigma_min > 0.0)) {
    throw std::invalid_argument("need sigma_max > sigma_min > 0");
  }
  std::vector<double> steps(cfg.n_steps + 1);
  if (cfg.n_steps == 1) {
    steps[0] = cfg.sigma_max;
    steps[1] = 0.0;
    return steps;
  }
  const double inv_rho = 1.0 / cfg.rho;
  const double hi = std::pow(cfg.sigma_max, inv_rho);
  const double lo = std::pow(cfg.sigma_min, inv_rho);
  for (int i = 0; i < cfg.n_steps; ++i) {
    const double frac = static_cast<double>(i) / (cfg.n_steps - 1);
    steps[i] = std::pow(hi + frac * (lo - hi), cfg.rho);
  }
  steps[cfg.n_steps] = 0.0;
  return steps;
}

Eigen::VectorXd sampler_condition_vector(const SamplerConfig& cfg, const ImageShape& shape) {
  switch (cfg.condition_mode) {
    case ConditionMode::zeros:
      return Eigen::VectorXd::Zero(kConditionDim);
    case ConditionMode::identity_onehot:
      return condition_vector(AugmentationParams{}, shape);
    case ConditionMode::params:
      return condition_vector(cfg.condition_params, shape);
  }
  return Eigen::VectorXd::Zero(kConditionDim);
}

Eigen::MatrixXd heun_sample(const DenoiserFn& denoiser, const SamplerConfig& cfg,
                            const DiffusionSchedule& schedule, Rng& rng, int count,
                            const ImageShape& shape) {
  (void)schedule;  // trajectories run in the scale-free sigma parameterization
  const int d = shape.dim();
  const std::vector<double> sigmas = sigma_steps(cfg);
  const Eigen::VectorXd cond = sampler_condition_vector(cfg, shape);

  Eigen::MatrixXd samples(d, count);
  Eigen::VectorXd x(d), d_cur(d), x_euler(d);
  for (int s = 0; s < count; ++s) {
    for (int i = 0; i < d; ++i) x(i) = cfg.sigma_max * rng.normal();
    for (size_t k = 0; k + 1 < sigmas.size(); ++k) {
      const double sig = sigmas[k];
      const double sig_next = sigmas[k + 1];
      d_cur = (x - denoiser(x, sig, cond)) / sig;
      x_euler = x + (sig_next - sig) * d_cur;
      if (sig_next > 0.0) {
        const Eigen::VectorXd d_next =
            (x_euler - denoiser(x_euler, sig_next, cond)) / sig_next;
        x += (sig_next - sig) * 0.5 * (d_cur + d_next);
      } else {
        x = x_euler;
      }
      if (!x.allFinite()) {
        throw std::runtime_error("sampler diverged at step " + std::to_string(k));
      }
    }
    samples.col(s) = x;
  }
  return samples;
}

std::map<int, Eigen::MatrixXd> conditioned_generation_sweep(
    const DenoiserFn& denoiser, const SamplerConfig& cfg, const DiffusionSchedule& schedule,
    Rng& rng, int count_per_condition, const ImageShape& shape,
    const std::vector<int>& quarter_turns) {
  std::map<int, Eigen::MatrixXd> out;
  for (int turns : quarter_turns) {
    SamplerConfig cond_cfg = cfg;
    cond_cfg.condition_mode = ConditionMode::params;
    cond_cfg.condition_params = AugmentationParams{};
    cond_cfg.condition_params.kind = AugKind::rotation;
    cond_cfg.condition_params.quarter_turns = turns;
    out[turns] = heun_sample(denoiser, cond_cfg, schedule, rng, count_per_condition, shape);
  }
  return out;
}

DenoiserFn oracle_denoiser(const EmpiricalDataset& ds) {
  return [ds](const Eigen::VectorXd& x, double sigma, const Eigen::VectorXd&) {
    return optimal_denoiser(x, sigma, ds);
  };
}

void write_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image,
               const ImageShape& shape) {
  if (shape.channels != 1) throw std::invalid_argument("PGM output is single-channel only");
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  std::fprintf(f, "P5\n%d %d\n255\n", shape.width, shape.height);
  for (int i = 0; i < image.size(); ++i) {
    const double unit = std::clamp((image(i) + 1.0) / 2.0, 0.0, 1.0);
    const unsigned char byte = static_cast<unsigned char>(std::lround(unit * 255.0));
    std::fwrite(&byte, 1, 1, f);
  }
  std::fclose(f);
}

}  // namespace scoreaug
