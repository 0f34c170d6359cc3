#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scoreaug/rng.hpp"

namespace scoreaug {

enum class AugKind {
  identity,
  brightness,
  translation,
  cutout,
  rotation,
  smooth_nonlinear,
};

constexpr int kNumAugKinds = 6;

const char* aug_kind_name(AugKind kind);
AugKind aug_kind_from_name(const std::string& name);

// Raster layout is channel-major row-major: index = (c*H + r)*W + col.
struct ImageShape {
  int height = 1;
  int width = 1;
  int channels = 1;
  int dim() const { return height * width * channels; }
  bool square() const { return height == width; }
};

// One sampled augmentation. Only the fields of the active kind are meaningful.
struct AugmentationParams {
  AugKind kind = AugKind::identity;
  double brightness = 1.0;   // scale factor, in [1/B, B]
  int shift_i = 0;           // rows, positive moves content down
  int shift_j = 0;           // columns, positive moves content right
  double cut_cx = 0.5;       // cutout center, fractional [0,1]
  double cut_cy = 0.5;
  int cut_h = 0;             // cutout extent in pixels
  int cut_w = 0;
  int quarter_turns = 0;     // in {0,1,2,3}
  double nl_strength = 0.0;  // x -> x + a*tanh(x), |a| < 1
};

// Sampling ranges. identity is always part of the support.
struct AugmentationConfig {
  std::vector<AugKind> kinds = {AugKind::identity};
  double brightness_max = 2.0;   // B: omega_b in [1/B, B]
  double translate_ratio = 0.25; // R_t
  double cutout_ratio = 0.5;     // R_c
  double nonlinear_max = 0.5;    // |a| bound for smooth_nonlinear
};

// Sparse linear map with at most one source entry per output row:
// y[i] = coef[i] * x[src[i]], or 0 when src[i] < 0. All four image
// augmentations have this shape. Immutable after construction.
class LinearOperator {
 public:
  LinearOperator(int rows, int cols, std::vector<int> src, std::vector<double> coef);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd adjoint(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd materialize() const;

 private:
  int rows_;
  int cols_;
  std::vector<int> src_;
  std::vector<double> coef_;
};

// Exact matrix realization of one augmentation on an H x W x C raster.
// The spatial map acts identically on every channel. smooth_nonlinear has no
// matrix and is rejected.
LinearOperator build_operator(const AugmentationParams& params, const ImageShape& shape);

// Moore-Penrose inverse of T T^T, via symmetric eigendecomposition.
Eigen::MatrixXd gram_pseudoinverse(const LinearOperator& op);

// Validates that every enabled kind has nonempty parameter support on the
// given raster; throws std::invalid_argument otherwise.
void validate_augmentation_config(const AugmentationConfig& cfg, const ImageShape& shape);

// Uniform kind choice, then uniform per-kind parameters. Draw order per kind
// is fixed (see the implementation) so seeded runs replay exactly.
AugmentationParams sample_params(Rng& rng, const AugmentationConfig& cfg,
                                 const ImageShape& shape);

// Fixed-length conditioning encoding: one-hot kind block, then normalized
// parameters. The cutout center is dropped; only (h/H, w/W) survive.
constexpr int kConditionDim = kNumAugKinds + 7;
Eigen::VectorXd condition_vector(const AugmentationParams& params, const ImageShape& shape);

// Applies the transformation of any kind, including smooth_nonlinear
// (elementwise x + a*tanh(x)). Linear kinds go through build_operator.
Eigen::VectorXd apply_transform(const AugmentationParams& params, const ImageShape& shape,
                                const Eigen::VectorXd& x);

}  // namespace scoreaug
