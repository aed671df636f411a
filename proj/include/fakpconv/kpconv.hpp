#pragma once

#include <span>
#include <vector>

#include "fakpconv/rng.hpp"
#include "fakpconv/tensor.hpp"

namespace fakp {

// Fixed spatial arrangement of the K kernel points inside the convolution
// ball of radius r. points is K x d; by construction one point sits at the
// origin and every point satisfies ||x_k|| <= r.
struct KernelDisposition {
  Tensor points;  // K x d
  double radius = 0.0;

  std::size_t count() const { return points.dim(0); }
  std::size_t dim() const { return points.dim(1); }
};

enum class KernelMethod {
  Repulsion,  // seeded ball init + projected gradient descent on a repulsive energy
  Shell,      // origin plus a fixed shell at 0.66 r
};

KernelDisposition dispose_kernel_points(std::size_t k, double r, KernelMethod method,
                                        std::uint64_t seed, std::size_t d = 3);

// Linear correlation max(0, 1 - ||y - xk|| / sigma).
double correlation(std::span<const double> y, std::span<const double> xk, double sigma);

enum class NeighborMethod { BruteForce, Grid };

using NeighborLists = std::vector<std::vector<std::size_t>>;

// For each query row, the indices of points within distance r (inclusive),
// sorted ascending. The grid method buckets points into cells of side r and
// scans the 3^d adjacent cells; both methods apply the same predicate.
NeighborLists radius_neighbors(const Tensor& x, const Tensor& queries, double r,
                               NeighborMethod method = NeighborMethod::Grid);

// One rigid point convolution: K kernel points with weight matrices W
// (K x c_in x c_out), influence distance sigma, ball radius matching the
// neighbor lists.
struct KPConvLayer {
  KernelDisposition disposition;
  Tensor weights;  // K x c_in x c_out
  double sigma = 0.0;
  double radius = 0.0;

  std::size_t c_in() const { return weights.dim(1); }
  std::size_t c_out() const { return weights.dim(2); }
};

KPConvLayer make_kpconv_layer(std::size_t k, std::size_t c_in, std::size_t c_out, double radius,
                              double sigma_ratio, KernelMethod method, Rng& rng);

// f_out(q) = sum_{i in N_q} sum_k corr(X_i - q, xk) * (F_i W_k) for each
// query; empty neighborhoods produce zero rows. Differentiable wrt F and the
// weights; coordinates are treated as constants. Neighbor lists must have
// been computed at the layer radius (NeighborRadiusMismatch otherwise).
Tensor kpconv_forward(Tape& tape, const KPConvLayer& layer, const Tensor& x, const Tensor& f,
                      const Tensor& queries, const NeighborLists& neighbors);

// Buckets points into cells of the given side (offset to the per-axis
// minimum), emitting one barycenter per non-empty cell with the mean of the
// member features, ordered by lexicographic cell index. Outputs are plain
// values; nothing is recorded on a tape.
std::pair<Tensor, Tensor> grid_subsample(const Tensor& x, const Tensor& f, double cell);

// Coordinate-only variant used by strided network blocks.
Tensor grid_subsample_coords(const Tensor& x, double cell);

}  // namespace fakp
