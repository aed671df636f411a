#pragma once

#include <vector>

#include "fakpconv/geometry.hpp"
#include "fakpconv/tensor.hpp"

namespace fakp {

// Eigendecomposition of a symmetric d x d matrix: eigenvalues sorted
// descending, unit eigenvector columns paired by index, each column's sign
// canonicalized so its largest-magnitude entry is positive.
struct EigenDecomposition {
  std::size_t dim = 0;
  std::vector<double> eigenvalues;   // d, descending
  std::vector<double> eigenvectors;  // d x d row-major; column i pairs with eigenvalue i

  double vec(std::size_t row, std::size_t col) const { return eigenvectors[row * dim + col]; }
};

// Mean of the rows of X:[n x d].
std::vector<double> centroid(const Tensor& x);

// Un-normalized centered second moment (X - 1c^T)^T (X - 1c^T); symmetric PSD.
std::vector<double> covariance(const Tensor& x);

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
// 1e-13, capped at 100 sweeps. Input must be symmetric to 1e-9 (NotSymmetric).
EigenDecomposition sym_eig(const std::vector<double>& c, std::size_t d);

// Input-dependent frame F(X): the finite set of group elements whose average
// reproduces averaging over the whole group. Elements are ordered by the
// lexicographic sign pattern (+ before -) applied to the canonical
// eigenvector columns.
struct Frame {
  std::vector<EuclideanTransform> elements;
  Group group = Group::T;
  // Smallest relative eigenvalue gap encountered; +inf when no
  // eigendecomposition was needed (translation frame).
  double degeneracy_gap = 0.0;
};

// Frame construction from centroid and covariance eigenvectors:
//   T  -> { (I, c) }
//   SO -> { (Q_s, 0) : det = +1 },  O -> { (Q_s, 0) : all sign flips }
//   SE -> { (Q_s, c) : det = +1 },  E -> { (Q_s, c) : all sign flips }
// Throws DegenerateFrame when the relative eigenvalue gap falls below
// degeneracy_tol (the sign enumeration no longer determines the frame),
// EmptyCloud for n == 0 inputs, TooFewPoints when n < d and eigenvectors
// are required.
Frame build_frame(const Tensor& x, Group group, double degeneracy_tol = 1e-6);

// |F(X)|: 1 for T, 2^(d-1) for SO/SE, 2^d for O/E.
std::size_t frame_cardinality(Group group, std::size_t d);

// Smallest relative covariance eigenvalue gap of a cloud; the genericity
// measure gating frame construction.
double min_relative_eigen_gap(const Tensor& coords);

}  // namespace fakp
