#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "scoreaug/dataset.hpp"
#include "scoreaug/rng.hpp"
#include "scoreaug/schedule.hpp"
#include "scoreaug/transforms.hpp"

namespace scoreaug {

using DenoiserFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, double, const Eigen::VectorXd&)>;

enum class ConditionMode {
  zeros,           // all-zero condition vector
  identity_onehot, // the identity kind's encoding
  params,          // encoding of an explicit AugmentationParams
};

struct SamplerConfig {
  int n_steps = 18;  // denoiser evaluations = 2*n_steps - 1
  double sigma_max = 80.0;
  double sigma_min = 1e-3;
  double rho = 7.0;
  ConditionMode condition_mode = ConditionMode::zeros;
  AugmentationParams condition_params;
};

// Descending EDM rho-schedule of length n_steps + 1, ending at exactly 0.
std::vector<double> sigma_steps(const SamplerConfig& cfg);

Eigen::VectorXd sampler_condition_vector(const SamplerConfig& cfg, const ImageShape& shape);

// Deterministic 2nd-order Heun integration of the sigma-space PF-ODE
// dx/dsigma = (x - D(x; sigma)) / sigma from sigma_max to 0, with a plain
// Euler step into sigma = 0. The schedule's scale function is divided out, so
// VE and VP share the same trajectory space. Returns one sample per column.
Eigen::MatrixXd heun_sample(const DenoiserFn& denoiser, const SamplerConfig& cfg,
                            const DiffusionSchedule& schedule, Rng& rng, int count,
                            const ImageShape& shape);

// One batch per quarter-turn value, with the rotation condition held fixed.
std::map<int, Eigen::MatrixXd> conditioned_generation_sweep(
    const DenoiserFn& denoiser, const SamplerConfig& cfg, const DiffusionSchedule& schedule,
    Rng& rng, int count_per_condition, const ImageShape& shape,
    const std::vector<int>& quarter_turns);

// Denoiser adapters.
DenoiserFn oracle_denoiser(const EmpiricalDataset& ds);

// 8-bit grayscale PGM with [-1, 1] mapped linearly to [0, 255], clamped.
void write_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image,
               const ImageShape& shape);

}  // namespace scoreaug
