#include "fakpconv/fa.hpp"

#include <algorithm>
#include <string>

#include "fakpconv/ops.hpp"

namespace fakp {

namespace {

void check_feature_width(const Tensor& f, std::size_t d, const char* what) {
  const std::size_t c = f.rank() == 2 ? f.dim(1) : f.dim(0);
  if (c == 0 || c % d != 0)
    throw NotMultipleOfDim(std::string(what) + " width " + std::to_string(c) +
                           " must be a positive multiple of d=" + std::to_string(d));
}

std::vector<Tensor> branch_outputs(Tape& tape, const WrappedFunction::Fn& inner,
                                   const std::vector<EuclideanTransform>& elements,
                                   const Tensor& x, const Tensor& f,
                                   std::vector<EuclideanTransform>* used) {
  const std::size_t d = x.dim(1);
  std::vector<Tensor> outs;
  outs.reserve(elements.size());
  for (const EuclideanTransform& g : elements) {
    const EuclideanTransform gi = inverse(g);
    Tensor xb = apply(tape, gi, x);
    Tensor fb = act_on_features(tape, gi, f, d);
    outs.push_back(inner(tape, xb, fb));
    if (used) used->push_back(g);
  }
  return outs;
}

}  // namespace

Tensor pairwise_average(Tape& tape, std::vector<Tensor> branches) {
  if (branches.empty()) throw ShapeMismatch("pairwise_average: no branches");
  const std::size_t n = branches.size();
  // Tree reduction in fixed order: deterministic regardless of how the
  // branch values were produced.
  std::vector<Tensor> level = std::move(branches);
  while (level.size() > 1) {
    std::vector<Tensor> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(add(tape, level[i], level[i + 1]));
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return scale(tape, level[0], 1.0 / static_cast<double>(n));
}

Tensor fa_invariant(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f) {
  if (wrapped.mode != WrapMode::Invariant)
    throw Error("fa_invariant: wrapped function is not in invariant mode");
  const std::size_t d = x.dim(1);
  check_feature_width(f, d, "fa_invariant: input feature");
  const Frame frame = build_frame(x, wrapped.group, wrapped.degeneracy_tol);
  std::vector<Tensor> outs = branch_outputs(tape, wrapped.inner, frame.elements, x, f, nullptr);
  return pairwise_average(tape, std::move(outs));
}

Tensor fa_equivariant(Tape& tape, const WrappedFunction& wrapped, const Tensor& x,
                      const Tensor& f) {
  if (wrapped.mode != WrapMode::Equivariant)
    throw Error("fa_equivariant: wrapped function is not in equivariant mode");
  const std::size_t d = x.dim(1);
  check_feature_width(f, d, "fa_equivariant: input feature");
  const Frame frame = build_frame(x, wrapped.group, wrapped.degeneracy_tol);
  std::vector<Tensor> outs;
  outs.reserve(frame.elements.size());
  for (const EuclideanTransform& g : frame.elements) {
    const EuclideanTransform gi = inverse(g);
    Tensor xb = apply(tape, gi, x);
    Tensor fb = act_on_features(tape, gi, f, d);
    Tensor yb = wrapped.inner(tape, xb, fb);
    check_feature_width(yb, d, "fa_equivariant: output feature");
    outs.push_back(act_on_features(tape, g, yb, d));
  }
  return pairwise_average(tape, std::move(outs));
}

namespace {

bool groups_non_intersecting(Group a, Group b) {
  // The only trivial-intersection pairs in the table: translations with a
  // purely rotational group.
  auto is_rot_only = [](Group g) { return g == Group::SO || g == Group::O; };
  return (a == Group::T && is_rot_only(b)) || (b == Group::T && is_rot_only(a));
}

}  // namespace

Tensor fa_composed(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f) {
  if (!wrapped.composed_with)
    throw Error("fa_composed: no inner wrapper configured");
  const auto [inner_group, inner_mode] = *wrapped.composed_with;
  if (!groups_non_intersecting(wrapped.group, inner_group))
    throw GroupsIntersect("fa_composed: " + group_name(wrapped.group) + " and " +
                          group_name(inner_group) + " share more than the identity");

  WrappedFunction inner_wrap;
  inner_wrap.inner = wrapped.inner;
  inner_wrap.group = inner_group;
  inner_wrap.mode = inner_mode;
  inner_wrap.degeneracy_tol = wrapped.degeneracy_tol;

  WrappedFunction outer;
  outer.group = wrapped.group;
  outer.mode = wrapped.mode;
  outer.degeneracy_tol = wrapped.degeneracy_tol;
  outer.inner = [inner_wrap](Tape& t, const Tensor& xb, const Tensor& fb) {
    return inner_wrap.mode == WrapMode::Invariant ? fa_invariant(t, inner_wrap, xb, fb)
                                                  : fa_equivariant(t, inner_wrap, xb, fb);
  };
  return outer.mode == WrapMode::Invariant ? fa_invariant(tape, outer, x, f)
                                           : fa_equivariant(tape, outer, x, f);
}

Tensor fa_apply(Tape& tape, const WrappedFunction& wrapped, const Tensor& x, const Tensor& f) {
  if (wrapped.composed_with) return fa_composed(tape, wrapped, x, f);
  return wrapped.mode == WrapMode::Invariant ? fa_invariant(tape, wrapped, x, f)
                                             : fa_equivariant(tape, wrapped, x, f);
}

namespace {

bool contains(const std::vector<EuclideanTransform>& group, const EuclideanTransform& g,
              double tol) {
  for (const EuclideanTransform& h : group)
    if (transform_distance(g, h) < tol) return true;
  return false;
}

}  // namespace

Tensor group_average(Tape& tape, const WrappedFunction::Fn& inner,
                     const std::vector<EuclideanTransform>& finite_group, const Tensor& x,
                     const Tensor& f, WrapMode mode) {
  if (finite_group.empty()) throw NotAGroup("group_average: empty element list");
  constexpr double kTol = 1e-9;
  for (const EuclideanTransform& g : finite_group) {
    if (!contains(finite_group, inverse(g), kTol))
      throw NotAGroup("group_average: set is not closed under inverse");
    for (const EuclideanTransform& h : finite_group)
      if (!contains(finite_group, compose(g, h), kTol))
        throw NotAGroup("group_average: set is not closed under composition");
  }

  const std::size_t d = x.dim(1);
  check_feature_width(f, d, "group_average: input feature");
  std::vector<Tensor> outs;
  outs.reserve(finite_group.size());
  for (const EuclideanTransform& g : finite_group) {
    const EuclideanTransform gi = inverse(g);
    Tensor xb = apply(tape, gi, x);
    Tensor fb = act_on_features(tape, gi, f, d);
    Tensor yb = inner(tape, xb, fb);
    if (mode == WrapMode::Equivariant) {
      check_feature_width(yb, d, "group_average: output feature");
      yb = act_on_features(tape, g, yb, d);
    }
    outs.push_back(yb);
  }
  return pairwise_average(tape, std::move(outs));
}

std::vector<EuclideanTransform> cube_rotation_group() {
  std::vector<EuclideanTransform> out;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& perm : perms)
    for (int signs = 0; signs < 8; ++signs) {
      std::vector<double> r(9, 0.0);
      for (int row = 0; row < 3; ++row) {
        const double s = (signs >> row) & 1 ? -1.0 : 1.0;
        r[row * 3 + perm[row]] = s;
      }
      EuclideanTransform g(3, std::move(r), {0.0, 0.0, 0.0});
      if (g.det() > 0.0) out.push_back(std::move(g));
    }
  return out;
}

}  // namespace fakp
