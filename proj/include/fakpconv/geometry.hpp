#pragma once

#include <string>
#include <vector>

#include "fakpconv/rng.hpp"
#include "fakpconv/tensor.hpp"

namespace fakp {

// Euclidean motion groups acting on point clouds in R^d.
//   T  — translations
//   SO — rotations
//   O  — rotations and reflections
//   SE — translations and rotations
//   E  — translations, rotations and reflections
enum class Group { T, SO, O, SE, E };

bool group_has_translation(Group g);
bool group_allows_reflection(Group g);
// True for every group whose frame needs the covariance eigenbasis (all but T).
bool group_needs_eigenbasis(Group g);
std::string group_name(Group g);
Group parse_group(const std::string& name);  // "t" | "so" | "o" | "se" | "e"

// One group element g = (R, t) with R orthogonal. Acts on row-stacked
// points as X R^T + 1 t^T, i.e. x -> R x + t per column point.
// Constructors validate orthogonality and |det R| = 1 to 1e-9.
struct EuclideanTransform {
  std::size_t dim = 0;
  std::vector<double> rotation;     // d x d, row-major
  std::vector<double> translation;  // d

  EuclideanTransform(std::size_t d, std::vector<double> rotation_rm, std::vector<double> t);
  static EuclideanTransform identity(std::size_t d);

  double rot(std::size_t i, std::size_t j) const { return rotation[i * dim + j]; }
  double det() const;
  bool is_translation_only(double tol = 1e-12) const;
};

// X R^T + 1 t^T for X:[n x d]; differentiable wrt X.
Tensor apply(Tape& tape, const EuclideanTransform& g, const Tensor& x);

// (R^T, -R^T t); composing with the original gives the identity.
EuclideanTransform inverse(const EuclideanTransform& g);

// Action of the result equals applying g1 first, then g2.
EuclideanTransform compose(const EuclideanTransform& g2, const EuclideanTransform& g1);

// Transforms a feature matrix [n x c] (or vector [c]) with c = k*d by
// temporarily reshaping to (n*k) x d rows, applying g, and reshaping back.
// Differentiable wrt f. Throws NotMultipleOfDim when d does not divide c.
Tensor act_on_features(Tape& tape, const EuclideanTransform& g, const Tensor& f, std::size_t d);

// Max-abs deviation between two transforms over rotation and translation
// entries; used for set matching and group validation.
double transform_distance(const EuclideanTransform& a, const EuclideanTransform& b);

// Haar-uniform rotation via QR of a Gaussian matrix (Gram-Schmidt keeps the
// triangular diagonal positive). det is forced to +1 for SO/SE; O/E keep the
// natural 1/2 reflection probability. Translation is uniform in
// [-scale, scale]^d for groups containing translations, else zero.
EuclideanTransform random_transform(Group group, std::size_t d, double scale, Rng& rng);

// Coordinates X:[n x d] in a shared world frame plus per-point features
// F:[n x c]. d in {2, 3}.
struct PointCloud {
  Tensor coords;
  Tensor features;

  PointCloud(Tensor coords_in, Tensor features_in);
  std::size_t num_points() const { return coords.dim(0); }
  std::size_t dim() const { return coords.dim(1); }
};

}  // namespace fakp
