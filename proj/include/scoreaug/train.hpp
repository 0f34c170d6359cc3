#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scoreaug/dataset.hpp"
#include "scoreaug/model.hpp"
#include "scoreaug/sampler.hpp"
#include "scoreaug/schedule.hpp"
#include "scoreaug/transforms.hpp"

namespace scoreaug {

enum class LossVariant { edm, scoreaug, scoreaug_nonlinear };

const char* loss_variant_name(LossVariant v);
LossVariant loss_variant_from_name(const std::string& name);

struct TrainConfig {
  LossVariant variant = LossVariant::edm;
  AugmentationConfig aug;
  bool conditioning = true;
  int batch_size = 128;
  int steps = 20000;
  double learning_rate = 1e-3;
  double ema_halflife = 500.0;  // in steps
  double heldout_fraction = 0.0;
  std::uint64_t seed = 0;
  int eval_every = 1000;
  double weight_decay = 0.0;
  int eval_draws = 4096;
  int metric_samples = 16;  // sampler draws per metrics row
  NetConfig net;
  SamplerConfig sampler;  // used for the per-eval sample statistics
};

struct MetricsRow {
  long step = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double gap = 0.0;
  double oracle_loss_floor = 0.0;
  double nn_min = 0.0;
  double nn_median = 0.0;
  double nn_max = 0.0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  std::string to_csv() const;  // fixed column set, 17-digit floats
};

// Builds the (input, target, condition) triple for one training sample under
// the given loss variant. Linear kinds evaluate T(d + n); the nonlinear
// variant applies the map to data and noise separately only when the kind has
// no matrix form (for linear T the two expressions are the same real number).
DenoiserNet::Sample make_training_sample(LossVariant variant, const AugmentationParams& params,
                                         const ImageShape& shape, bool conditioning,
                                         const Eigen::VectorXd& d, const Eigen::VectorXd& n,
                                         double sigma, double sigma_data);

// Per-sample losses, forward only.
double edm_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                       const Eigen::VectorXd& n, double sigma);
double scoreaug_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                            const Eigen::VectorXd& n, double sigma,
                            const AugmentationParams& params, const ImageShape& shape,
                            bool conditioning);
double scoreaug_nonlinear_loss_sample(const DenoiserNet& net, const Eigen::VectorXd& d,
                                      const Eigen::VectorXd& n, double sigma,
                                      const AugmentationParams& params,
                                      const ImageShape& shape, bool conditioning);

struct TrainResult {
  DenoiserNet net;           // final raw parameters
  Eigen::VectorXd ema;       // EMA parameters used for evaluation
  RunMetrics metrics;
  bool diverged = false;
  long last_good_step = 0;
};

// One full training run. Deterministic given cfg.seed. When out_dir is given,
// writes metrics.csv and checkpoint.bin there (and keeps the last good
// checkpoint if the loss diverges). heldout may be empty; a positive
// heldout_fraction then splits the training set.
TrainResult train_run(const TrainConfig& cfg, const DiffusionSchedule& schedule,
                      const EmpiricalDataset& dataset,
                      const EmpiricalDataset* heldout = nullptr,
                      const std::filesystem::path* out_dir = nullptr);

struct GapReport {
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double gap = 0.0;
};

// Averaged EDM losses of the given denoiser over n_eval draws on each set;
// gap = heldout - train. Deterministic given the seed.
GapReport heldout_gap(const DenoiserFn& denoiser, const EmpiricalDataset& train,
                      const EmpiricalDataset& heldout, int n_eval, double sigma_data,
                      std::uint64_t seed);

struct NnSummary {
  Eigen::VectorXd distances;  // one per sample
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

// Exact Euclidean nearest-neighbor distances from samples to the dataset.
NnSummary memorization_distance(const Eigen::MatrixXd& samples, const EmpiricalDataset& ds);

// Monte Carlo estimate of the irreducible loss E[lambda * tr Cov(x0 | x)]
// under the training noise prior, using the closed-form per-draw posterior
// variance of the empirical mixture.
double oracle_loss_floor(const EmpiricalDataset& ds, int n_draws, std::uint64_t seed);

DenoiserFn net_denoiser(const DenoiserNet& net);

}  // namespace scoreaug
