#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fakpconv/geometry.hpp"
#include "fakpconv/rng.hpp"

namespace fakp {

enum class ShapeKind { Sphere, Box, Torus, Cylinder, Cone, Plane };

std::string shape_name(ShapeKind kind);
ShapeKind parse_shape(const std::string& name);

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;
  std::string id;
};

// Recipe for a balanced synthetic classification set. Anisotropic per-axis
// scaling keeps covariance spectra generic (distinct eigenvalues) and gives
// every class a canonical orientation bias, mirroring CAD-style data.
struct DatasetSpec {
  std::vector<ShapeKind> classes = {ShapeKind::Sphere,   ShapeKind::Box,  ShapeKind::Torus,
                                    ShapeKind::Cylinder, ShapeKind::Cone, ShapeKind::Plane};
  int points_per_cloud = 256;
  double noise_std = 0.02;
  std::pair<double, double> anisotropy_range = {0.7, 1.3};
  std::uint64_t seed = 0;
  int train_count = 50;  // per class
  int test_count = 50;   // per class

  void validate() const;
};

// n surface samples of the unit shape, scaled per axis by factors drawn from
// anisotropy_range (kept pairwise separated so spectra stay generic), plus
// Gaussian noise. Features are the all-ones vector in R^3. Regenerates up to
// 10 times if the covariance eigenvalue gaps fall below 1e-3 relative.
PointCloud generate_shape(ShapeKind kind, int n, double noise_std,
                          std::pair<double, double> anisotropy_range, Rng& rng);

// Balanced train/test split with disjoint per-sample seed streams and stable
// ordering (classes in listed order, then index).
std::pair<std::vector<LabeledCloud>, std::vector<LabeledCloud>> make_dataset(
    const DatasetSpec& spec);

// First k samples of each class, preserving order.
std::vector<LabeledCloud> subset_per_class(const std::vector<LabeledCloud>& samples, int k,
                                           int num_classes);

// ASCII XYZ: one point per line, d coordinates then the feature floats,
// printed with 17 significant digits so a round trip is value-exact.
PointCloud load_xyz(const std::string& path, std::size_t d = 3);
void save_xyz(const std::string& path, const PointCloud& cloud);

// Applies a fresh seeded random rotation per sample to coordinates and
// (through the reshape representation) features; labels and ids unchanged.
std::vector<LabeledCloud> rotate_dataset(const std::vector<LabeledCloud>& samples,
                                         std::uint64_t seed);

}  // namespace fakp
