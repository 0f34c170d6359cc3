#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "scoreaug/rng.hpp"
#include "scoreaug/schedule.hpp"
#include "scoreaug/transforms.hpp"

namespace scoreaug {

struct NetConfig {
  int data_dim = 2;
  int cond_dim = kConditionDim;
  std::vector<int> hidden = {256, 256, 256};
  int noise_embed_dim = 32;  // even; sin/cos pairs
  double dropout = 0.0;
};

// Preconditioned fully-connected denoiser:
//   D(x; sigma, w) = c_skip*x + c_out * F(c_in*x; c_noise, w)
// F concatenates the scaled input with a sinusoidal embedding of c_noise;
// the condition vector enters through a bias-free linear map added to that
// embedding, so an all-zeros condition contributes exactly nothing. tanh
// activations keep finite-difference gradient checks clean. The last layer is
// zero-initialized, so an untrained net is the pure skip path.
class DenoiserNet {
 public:
  DenoiserNet(NetConfig cfg, double sigma_data);

  const NetConfig& config() const { return cfg_; }
  double sigma_data() const { return sigma_data_; }
  int param_count() const { return static_cast<int>(theta_.size()); }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  // Variance-scaled init; fixed seed gives identical parameters.
  void init_params(Rng& rng);

  Eigen::VectorXd forward(const Eigen::VectorXd& x, double sigma,
                          const Eigen::VectorXd& cond) const;

  struct Sample {
    Eigen::VectorXd x;       // denoiser input
    Eigen::VectorXd target;
    Eigen::VectorXd cond;
    double sigma = 1.0;
    double weight = 1.0;     // lambda(sigma)
  };

  // Mean over the batch of weight * |D(x) - target|^2, with the analytic
  // parameter gradient. dropout_rng enables inverted dropout when the config
  // rate is positive. Throws on a non-finite loss, naming the batch index.
  double loss_and_grad(const std::vector<Sample>& batch, Eigen::VectorXd& grad,
                       Rng* dropout_rng = nullptr) const;

 private:
  struct LayerView {
    int w_offset, b_offset, in_dim, out_dim;
  };

  Eigen::VectorXd embed(double sigma, const Eigen::VectorXd& cond,
                        const Eigen::VectorXd& theta) const;

  NetConfig cfg_;
  double sigma_data_;
  int cond_w_offset_ = 0;          // bias-free condition map, embed_dim x cond_dim
  std::vector<LayerView> layers_;  // affine blocks, first consumes [x; embedding]
  Eigen::VectorXd theta_;
  Eigen::VectorXd embed_freqs_;
};

// Binary checkpoint: everything needed to resume or evaluate a run.
// Byte layout (little endian):
//   0x00  8 bytes  magic "SAUGCKPT"
//   0x08  u32     version (1)
//   0x0c  u32     data_dim
//   0x10  u32     cond_dim
//   0x14  u32     noise_embed_dim
//   0x18  f64     dropout
//   0x20  f64     sigma_data
//   0x28  u64     optimizer step count
//   0x30  u32     hidden layer count L, then L u32 widths
//   then  u64     parameter count P, then 4 f64[P]: theta, ema, adam_m, adam_v
struct Checkpoint {
  NetConfig net;
  double sigma_data = 0.5;
  std::uint64_t step = 0;
  Eigen::VectorXd theta, ema, adam_m, adam_v;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scoreaug
