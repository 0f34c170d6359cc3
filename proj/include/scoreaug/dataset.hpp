#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "scoreaug/transforms.hpp"

namespace scoreaug {

// Finite point set defining the Dirac-mixture data distribution. Points are
// columns; shape carries the raster interpretation (H*W*C == dim).
struct EmpiricalDataset {
  Eigen::MatrixXd points;  // d x N
  ImageShape shape;
  double sigma_data = 0.5;

  int dim() const { return static_cast<int>(points.rows()); }
  int count() const { return static_cast<int>(points.cols()); }
  Eigen::VectorXd mean() const { return points.rowwise().mean(); }
};

// Pooled per-coordinate standard deviation around the coordinate means.
double pooled_std(const Eigen::MatrixXd& points);

// sigma_data_override <= 0 means: compute from the points; degenerate sets
// (single point, all identical) fall back to 0.5.
EmpiricalDataset make_dataset(Eigen::MatrixXd points, ImageShape shape,
                              double sigma_data_override = 0.0);

// Text format: header "d N", then N rows of d values. Values are printed with
// 17 significant digits so a round trip is bit-exact.
void save_dataset(const std::filesystem::path& path, const EmpiricalDataset& ds);
EmpiricalDataset load_dataset(const std::filesystem::path& path, ImageShape shape,
                              double sigma_data_override = 0.0);

// Built-in generators.
//   gmm2d: asymmetric 3-component Gaussian mixture in the plane, shape 1x2x1.
//   glyphs8: 8x8 single-channel glyphs, one horizontal and one vertical bar
//            at random positions on a -1 background.
EmpiricalDataset generate_gmm2d(int n, std::uint64_t seed);
EmpiricalDataset generate_glyphs8(int n, std::uint64_t seed);

EmpiricalDataset generate_dataset(const std::string& name, int n, std::uint64_t seed);
std::vector<std::string> dataset_generators();

}  // namespace scoreaug
