#include "scoreaug/dataset.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scoreaug {

double pooled_std(const Eigen::MatrixXd& points) {
  const auto n = points.cols();
  if (n < 2) return 0.0;
  const Eigen::VectorXd mean = points.rowwise().mean();
  const double ss = (points.colwise() - mean).squaredNorm();
  return std::sqrt(ss / static_cast<double>(n * points.rows()));
}

EmpiricalDataset make_dataset(Eigen::MatrixXd points, ImageShape shape,
                              double sigma_data_override) {
  if (points.cols() < 1) throw std::invalid_argument("dataset needs at least one point");
  if (!points.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
  if (shape.dim() != points.rows()) {
    throw std::invalid_argument("dataset shape does not match point dimension");
  }
  EmpiricalDataset ds;
  ds.points = std::move(points);
  ds.shape = shape;
  if (sigma_data_override > 0.0) {
    ds.sigma_data = sigma_data_override;
  } else {
    const double s = pooled_std(ds.points);
    ds.sigma_data = s > 1e-12 ? s : 0.5;
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const EmpiricalDataset& ds) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  std::fprintf(f, "%d %d\n", ds.dim(), ds.count());
  for (int i = 0; i < ds.count(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) {
      std::fprintf(f, j == 0 ? "%.17g" : " %.17g", ds.points(j, i));
    }
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

EmpiricalDataset load_dataset(const std::filesystem::path& path, ImageShape shape,
                              double sigma_data_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
  int d = 0, n = 0;
  if (!(in >> d >> n) || d < 1 || n < 1) {
    throw std::runtime_error("bad dataset header in " + path.string());
  }
  Eigen::MatrixXd pts(d, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      if (!(in >> pts(j, i))) {
        throw std::runtime_error("truncated dataset file: " + path.string());
      }
    }
  }
  if (shape.dim() != d) {
    if (shape.height == 1 && shape.channels == 1 && shape.width <= 1) {
      shape = ImageShape{1, d, 1};  // unspecified shape: flat row raster
    } else {
      throw std::runtime_error("dataset shape does not match file dimension");
    }
  }
  return make_dataset(std::move(pts), shape, sigma_data_override);
}

EmpiricalDataset generate_gmm2d(int n, std::uint64_t seed) {
  // Component means chosen away from the diagonal so the coordinate swap
  // (the 180-degree rotation of a 1x2 raster) displaces every mode.
  static const double means[3][2] = {{1.4, -0.5}, {-1.0, 0.8}, {0.6, 1.6}};
  static const double weights[3] = {0.5, 0.3, 0.2};
  static const double spread = 0.15;
  Rng rng(seed);
  Eigen::MatrixXd pts(2, n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    int k = 0;
    double acc = weights[0];
    while (k < 2 && u >= acc) acc += weights[++k];
    pts(0, i) = means[k][0] + spread * rng.normal();
    pts(1, i) = means[k][1] + spread * rng.normal();
  }
  return make_dataset(std::move(pts), ImageShape{1, 2, 1});
}

EmpiricalDataset generate_glyphs8(int n, std::uint64_t seed) {
  const ImageShape shape{8, 8, 1};
  Rng rng(seed);
  Eigen::MatrixXd pts(shape.dim(), n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd img = Eigen::VectorXd::Constant(shape.dim(), -1.0);
    const int bar_row = static_cast<int>(rng.uniform_int(0, 7));
    const int bar_col = static_cast<int>(rng.uniform_int(0, 7));
    for (int c = 0; c < 8; ++c) img(bar_row * 8 + c) = 1.0;
    for (int r = 0; r < 8; ++r) img(r * 8 + bar_col) = 1.0;
    pts.col(i) = img;
  }
  return make_dataset(std::move(pts), shape);
}

EmpiricalDataset generate_dataset(const std::string& name, int n, std::uint64_t seed) {
  if (name == "gmm2d") return generate_gmm2d(n, seed);
  if (name == "glyphs8") return generate_glyphs8(n, seed);
  throw std::invalid_argument("unknown dataset generator: " + name);
}

std::vector<std::string> dataset_generators() { return {"gmm2d", "glyphs8"}; }

}  // namespace scoreaug
