#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "fakpconv/frames.hpp"
#include "fakpconv/geometry.hpp"
#include "fakpconv/tensor.hpp"

namespace fakp {

enum class WrapMode { Invariant, Equivariant };

// A point-cloud function f(X:[n x d], F:[n x c_in]) -> Tensor together with
// the symmetrization to apply to it. Wrapping adds no learnable state; the
// wrapper only re-evaluates `inner` on frame-transformed inputs and averages.
//
// composed_with, when present, names an inner wrapper: the function is first
// symmetrized over (composed_with.group, composed_with.mode) and the result
// over (group, mode). The two groups must not intersect beyond the identity
// (T paired with SO or O).
struct WrappedFunction {
  using Fn = std::function<Tensor(Tape&, const Tensor& x, const Tensor& f)>;

  Fn inner;
  Group group = Group::E;
  WrapMode mode = WrapMode::Invariant;
  std::optional<std::pair<Group, WrapMode>> composed_with;
  double degeneracy_tol = 1e-6;
};

// 1/|F(X)| sum_{g in F(X)} inner(g^-1 X, g^-1 F). The result is exactly
// invariant to the wrapped group acting on both X and F.
Tensor fa_invariant(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f);

// 1/|F(X)| sum_{g in F(X)} g . inner(g^-1 X, g^-1 F), the output re-transformed
// through the feature representation; requires the output width to be a
// multiple of d.
Tensor fa_equivariant(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f);

// Outer (group, mode) wrapper around the inner (composed_with) wrapper;
// yields e.g. joint T-invariance with O-equivariance. Throws GroupsIntersect
// for overlapping group pairs.
Tensor fa_composed(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f);

// Dispatch on mode / composed_with.
Tensor fa_apply(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f);

// Exact symmetrization over an explicit finite subgroup; the independent
// oracle for the frame-averaging wrappers. Validates closure under
// composition and inverse to 1e-9 (NotAGroup).
Tensor group_average(Tape& tape, const WrappedFunction::Fn& inner,
                     const std::vector<EuclideanTransform>& finite_group, const Tensor& x,
                     const Tensor& f, WrapMode mode);

// Deterministic tree-shaped average of branch outputs in frame order.
Tensor pairwise_average(Tape& tape, std::vector<Tensor> branches);

// The 24 rotations of the cube (signed axis permutations with det +1);
// handy finite subgroup of SO(3) for oracle checks.
std::vector<EuclideanTransform> cube_rotation_group();

}  // namespace fakp
