#include "scoreaug/transforms.hpp"

#include <cmath>
#include <stdexcept>

#include "scoreaug/numerics.hpp"

namespace scoreaug {

namespace {

constexpr const char* kKindNames[kNumAugKinds] = {
    "identity", "brightness", "translation", "cutout", "rotation", "smooth_nonlinear"};

int raster_index(const ImageShape& shape, int channel, int row, int col) {
  return (channel * shape.height + row) * shape.width + col;
}

// One quarter turn: pixel (r, c) moves to (c, H-1-r). Applied k times.
// Defined for square rasters; the 180-degree case (r, c) -> (H-1-r, W-1-c)
// is valid for any raster.
void rotate_position(int turns, int height, int width, int r, int c, int* r_out, int* c_out) {
  for (int k = 0; k < turns; ++k) {
    const int nr = c;
    const int nc = height - 1 - r;
    r = nr;
    c = nc;
  }
  *r_out = r;
  *c_out = c;
}

}  // namespace

const char* aug_kind_name(AugKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

AugKind aug_kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumAugKinds; ++i) {
    if (name == kKindNames[i]) return static_cast<AugKind>(i);
  }
  throw std::invalid_argument("unknown augmentation kind: " + name);
}

LinearOperator::LinearOperator(int rows, int cols, std::vector<int> src,
                               std::vector<double> coef)
    : rows_(rows), cols_(cols), src_(std::move(src)), coef_(std::move(coef)) {
  if (static_cast<int>(src_.size()) != rows_ || static_cast<int>(coef_.size()) != rows_) {
    throw std::invalid_argument("LinearOperator: table size must equal row count");
  }
  for (int i = 0; i < rows_; ++i) {
    if (src_[i] >= cols_) throw std::invalid_argument("LinearOperator: source index out of range");
  }
}

Eigen::VectorXd LinearOperator::apply(const Eigen::VectorXd& x) const {
  if (x.size() != cols_) throw std::invalid_argument("LinearOperator::apply: dimension mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows_);
  for (int i = 0; i < rows_; ++i) {
    if (src_[i] >= 0) y(i) = coef_[i] * x(src_[i]);
  }
  return y;
}

Eigen::VectorXd LinearOperator::adjoint(const Eigen::VectorXd& y) const {
  if (y.size() != rows_) throw std::invalid_argument("LinearOperator::adjoint: dimension mismatch");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols_);
  for (int i = 0; i < rows_; ++i) {
    if (src_[i] >= 0) x(src_[i]) += coef_[i] * y(i);
  }
  return x;
}

Eigen::MatrixXd LinearOperator::materialize() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows_, cols_);
  for (int i = 0; i < rows_; ++i) {
    if (src_[i] >= 0) m(i, src_[i]) = coef_[i];
  }
  return m;
}

LinearOperator build_operator(const AugmentationParams& params, const ImageShape& shape) {
  const int d = shape.dim();
  const int h_img = shape.height;
  const int w_img = shape.width;
  std::vector<int> src(d);
  std::vector<double> coef(d, 1.0);

  switch (params.kind) {
    case AugKind::identity: {
      for (int i = 0; i < d; ++i) src[i] = i;
      break;
    }
    case AugKind::brightness: {
      if (params.brightness <= 0.0) throw std::invalid_argument("brightness factor must be positive");
      for (int i = 0; i < d; ++i) {
        src[i] = i;
        coef[i] = params.brightness;
      }
      break;
    }
    case AugKind::translation: {
      // Output pixel (r, c) reads input pixel (r - di, c - dj); out-of-range
      // sources are zero-padded.
      for (int ch = 0; ch < shape.channels; ++ch) {
        for (int r = 0; r < h_img; ++r) {
          for (int c = 0; c < w_img; ++c) {
            const int rs = r - params.shift_i;
            const int cs = c - params.shift_j;
            const int out = raster_index(shape, ch, r, c);
            src[out] = (rs >= 0 && rs < h_img && cs >= 0 && cs < w_img)
                           ? raster_index(shape, ch, rs, cs)
                           : -1;
          }
        }
      }
      break;
    }
    case AugKind::cutout: {
      // Zero the pixels within h/2 vertically and w/2 horizontally of the
      // center; the comparison is in pixel units against real-valued bounds.
      const double cy = params.cut_cy * h_img;
      const double cx = params.cut_cx * w_img;
      for (int ch = 0; ch < shape.channels; ++ch) {
        for (int r = 0; r < h_img; ++r) {
          for (int c = 0; c < w_img; ++c) {
            const bool inside = std::abs(r - cy) <= params.cut_h / 2.0 &&
                                std::abs(c - cx) <= params.cut_w / 2.0;
            const int i = raster_index(shape, ch, r, c);
            src[i] = inside ? -1 : i;
          }
        }
      }
      break;
    }
    case AugKind::rotation: {
      const int turns = ((params.quarter_turns % 4) + 4) % 4;
      if (turns % 2 == 1 && !shape.square()) {
        throw std::invalid_argument("90-degree rotation requires a square raster");
      }
      for (int ch = 0; ch < shape.channels; ++ch) {
        for (int r = 0; r < h_img; ++r) {
          for (int c = 0; c < w_img; ++c) {
            int rd, cd;
            if (turns == 2) {
              rd = h_img - 1 - r;
              cd = w_img - 1 - c;
            } else {
              rotate_position(turns, h_img, w_img, r, c, &rd, &cd);
            }
            src[raster_index(shape, ch, rd, cd)] = raster_index(shape, ch, r, c);
          }
        }
      }
      break;
    }
    case AugKind::smooth_nonlinear:
      throw std::invalid_argument(
          "smooth_nonlinear has no matrix form; use apply_transform / the nonlinear loss");
  }
  return LinearOperator(d, d, std::move(src), std::move(coef));
}

Eigen::MatrixXd gram_pseudoinverse(const LinearOperator& op) {
  const Eigen::MatrixXd t = op.materialize();
  return symmetric_pseudoinverse(t * t.transpose()).pinv;
}

namespace {

int max_shift_i(const AugmentationConfig& cfg, const ImageShape& shape) {
  return static_cast<int>(std::floor(cfg.translate_ratio * shape.width));
}
int max_shift_j(const AugmentationConfig& cfg, const ImageShape& shape) {
  return static_cast<int>(std::floor(cfg.translate_ratio * shape.height));
}
int max_cut_h(const AugmentationConfig& cfg, const ImageShape& shape) {
  return static_cast<int>(std::floor(cfg.cutout_ratio * shape.height));
}
int max_cut_w(const AugmentationConfig& cfg, const ImageShape& shape) {
  return static_cast<int>(std::floor(cfg.cutout_ratio * shape.width));
}

}  // namespace

void validate_augmentation_config(const AugmentationConfig& cfg, const ImageShape& shape) {
  if (cfg.kinds.empty()) throw std::invalid_argument("augmentation kind list is empty");
  for (AugKind kind : cfg.kinds) {
    switch (kind) {
      case AugKind::brightness:
        if (cfg.brightness_max < 1.0) {
          throw std::invalid_argument("brightness_max must be >= 1");
        }
        break;
      case AugKind::cutout:
        if (max_cut_h(cfg, shape) < 1 || max_cut_w(cfg, shape) < 1) {
          throw std::invalid_argument("cutout_ratio too small for this raster");
        }
        break;
      case AugKind::smooth_nonlinear:
        if (!(cfg.nonlinear_max > 0.0 && cfg.nonlinear_max < 1.0)) {
          throw std::invalid_argument("nonlinear_max must lie in (0, 1)");
        }
        break;
      default:
        break;
    }
  }
}

AugmentationParams sample_params(Rng& rng, const AugmentationConfig& cfg,
                                 const ImageShape& shape) {
  if (cfg.kinds.empty()) throw std::invalid_argument("augmentation kind list is empty");
  AugmentationParams p;
  const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(cfg.kinds.size()) - 1);
  p.kind = cfg.kinds[static_cast<size_t>(idx)];
  switch (p.kind) {
    case AugKind::identity:
      break;
    case AugKind::brightness:
      p.brightness = rng.uniform(1.0 / cfg.brightness_max, cfg.brightness_max);
      break;
    case AugKind::translation: {
      const int mi = max_shift_i(cfg, shape);
      const int mj = max_shift_j(cfg, shape);
      p.shift_i = static_cast<int>(rng.uniform_int(-mi, mi));
      p.shift_j = static_cast<int>(rng.uniform_int(-mj, mj));
      break;
    }
    case AugKind::cutout: {
      p.cut_cx = rng.uniform01();
      p.cut_cy = rng.uniform01();
      p.cut_h = static_cast<int>(rng.uniform_int(1, max_cut_h(cfg, shape)));
      p.cut_w = static_cast<int>(rng.uniform_int(1, max_cut_w(cfg, shape)));
      break;
    }
    case AugKind::rotation:
      // Non-square rasters admit only the 0/180-degree subgroup.
      p.quarter_turns = shape.square() ? static_cast<int>(rng.uniform_int(0, 3))
                                       : 2 * static_cast<int>(rng.uniform_int(0, 1));
      break;
    case AugKind::smooth_nonlinear:
      p.nl_strength = rng.uniform(-cfg.nonlinear_max, cfg.nonlinear_max);
      break;
  }
  return p;
}

Eigen::VectorXd condition_vector(const AugmentationParams& params, const ImageShape& shape) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kConditionDim);
  v(static_cast<int>(params.kind)) = 1.0;
  const int base = kNumAugKinds;
  switch (params.kind) {
    case AugKind::identity:
      break;
    case AugKind::brightness:
      v(base + 0) = params.brightness - 1.0;
      break;
    case AugKind::translation:
      v(base + 1) = static_cast<double>(params.shift_i) / shape.height;
      v(base + 2) = static_cast<double>(params.shift_j) / shape.width;
      break;
    case AugKind::cutout:
      // The center coordinate is deliberately absent from the encoding.
      v(base + 3) = static_cast<double>(params.cut_h) / shape.height;
      v(base + 4) = static_cast<double>(params.cut_w) / shape.width;
      break;
    case AugKind::rotation:
      v(base + 5) = params.quarter_turns / 4.0;
      break;
    case AugKind::smooth_nonlinear:
      v(base + 6) = params.nl_strength;
      break;
  }
  return v;
}

Eigen::VectorXd apply_transform(const AugmentationParams& params, const ImageShape& shape,
                                const Eigen::VectorXd& x) {
  if (params.kind == AugKind::smooth_nonlinear) {
    return x.array() + params.nl_strength * x.array().tanh();
  }
  return build_operator(params, shape).apply(x);
}

}  // namespace scoreaug
