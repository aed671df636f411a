#include "fakpconv/geometry.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

namespace fakp {

bool group_has_translation(Group g) {
  return g == Group::T || g == Group::SE || g == Group::E;
}

bool group_allows_reflection(Group g) { return g == Group::O || g == Group::E; }

bool group_needs_eigenbasis(Group g) { return g != Group::T; }

std::string group_name(Group g) {
  switch (g) {
    case Group::T: return "t";
    case Group::SO: return "so";
    case Group::O: return "o";
    case Group::SE: return "se";
    case Group::E: return "e";
  }
  return "?";
}

Group parse_group(const std::string& name) {
  if (name == "t") return Group::T;
  if (name == "so") return Group::SO;
  if (name == "o") return Group::O;
  if (name == "se") return Group::SE;
  if (name == "e") return Group::E;
  throw ParseError("unknown group '" + name + "' (expected t|so|o|se|e)");
}

namespace {

void validate_rotation(std::size_t d, const std::vector<double>& r) {
  if (d < 2 || d > 3) throw ShapeMismatch("EuclideanTransform: d must be 2 or 3");
  if (r.size() != d * d) throw ShapeMismatch("EuclideanTransform: rotation is not d x d");
  // ||R^T R - I||_max < 1e-9
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += r[k * d + i] * r[k * d + j];
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(s - expect) >= 1e-9)
        throw Error("EuclideanTransform: rotation is not orthogonal");
    }
}

double det2(const std::vector<double>& r) { return r[0] * r[3] - r[1] * r[2]; }

double det3(const std::vector<double>& r) {
  return r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
         r[2] * (r[3] * r[7] - r[4] * r[6]);
}

}  // namespace

EuclideanTransform::EuclideanTransform(std::size_t d, std::vector<double> rotation_rm,
                                       std::vector<double> t)
    : dim(d), rotation(std::move(rotation_rm)), translation(std::move(t)) {
  validate_rotation(d, rotation);
  if (translation.size() != d)
    throw ShapeMismatch("EuclideanTransform: translation is not a d-vector");
  if (std::abs(std::abs(det()) - 1.0) >= 1e-9)
    throw Error("EuclideanTransform: |det R| != 1");
}

EuclideanTransform EuclideanTransform::identity(std::size_t d) {
  std::vector<double> r(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) r[i * d + i] = 1.0;
  return EuclideanTransform(d, std::move(r), std::vector<double>(d, 0.0));
}

double EuclideanTransform::det() const {
  return dim == 2 ? det2(rotation) : det3(rotation);
}

bool EuclideanTransform::is_translation_only(double tol) const {
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      if (std::abs(rot(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
  return true;
}

Tensor apply(Tape& tape, const EuclideanTransform& g, const Tensor& x) {
  if (!x.defined() || x.rank() != 2 || x.dim(1) != g.dim)
    throw ShapeMismatch("apply: X must be n x d with d matching the transform");
  const std::size_t n = x.dim(0), d = g.dim;
  std::vector<double> out(n * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double s = g.translation[r];
      for (std::size_t k = 0; k < d; ++k) s += g.rot(r, k) * xv[i * d + k];
      out[i * d + r] = s;
    }
  Tensor y = Tensor::from_values({n, d}, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    Tensor xc = x, yc = y;
    xc.grad_mut();
    yc.grad_mut();
    std::vector<double> rot = g.rotation;
    tape.record([xc, yc, n, d, rot = std::move(rot)]() mutable {
      auto dy = yc.grad();
      auto dx = xc.grad_mut();
      // dX = dY * R
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          double s = 0.0;
          for (std::size_t r = 0; r < d; ++r) s += dy[i * d + r] * rot[r * d + k];
          dx[i * d + k] += s;
        }
    });
  }
  return y;
}

EuclideanTransform inverse(const EuclideanTransform& g) {
  const std::size_t d = g.dim;
  std::vector<double> rt(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) rt[i * d + j] = g.rot(j, i);
  std::vector<double> t(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += rt[i * d + k] * g.translation[k];
    t[i] = -s;
  }
  return EuclideanTransform(d, std::move(rt), std::move(t));
}

EuclideanTransform compose(const EuclideanTransform& g2, const EuclideanTransform& g1) {
  if (g1.dim != g2.dim) throw ShapeMismatch("compose: dimension mismatch");
  const std::size_t d = g1.dim;
  std::vector<double> r(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += g2.rot(i, k) * g1.rot(k, j);
      r[i * d + j] = s;
    }
  std::vector<double> t(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = g2.translation[i];
    for (std::size_t k = 0; k < d; ++k) s += g2.rot(i, k) * g1.translation[k];
    t[i] = s;
  }
  return EuclideanTransform(d, std::move(r), std::move(t));
}

Tensor act_on_features(Tape& tape, const EuclideanTransform& g, const Tensor& f, std::size_t d) {
  if (!f.defined() || f.rank() < 1 || f.rank() > 2)
    throw ShapeMismatch("act_on_features: expected [n x c] or [c]");
  if (d != g.dim) throw ShapeMismatch("act_on_features: d mismatch with transform");
  const std::size_t c = f.rank() == 2 ? f.dim(1) : f.dim(0);
  if (c == 0 || c % d != 0)
    throw NotMultipleOfDim("act_on_features: feature width " + std::to_string(c) +
                           " is not a positive multiple of d=" + std::to_string(d));
  // Viewed as (n*k) rows of length d; the row-major layout already matches,
  // so the reshape is implicit.
  const std::size_t rows = f.size() / d;
  std::vector<double> out(f.size());
  auto fv = f.values();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double s = g.translation[r];
      for (std::size_t k = 0; k < d; ++k) s += g.rot(r, k) * fv[i * d + k];
      out[i * d + r] = s;
    }
  Tensor y = Tensor::from_values(f.shape(), std::move(out), f.requires_grad());
  if (f.requires_grad()) {
    Tensor fc = f, yc = y;
    fc.grad_mut();
    yc.grad_mut();
    std::vector<double> rot = g.rotation;
    tape.record([fc, yc, rows, d, rot = std::move(rot)]() mutable {
      auto dy = yc.grad();
      auto df = fc.grad_mut();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          double s = 0.0;
          for (std::size_t r = 0; r < d; ++r) s += dy[i * d + r] * rot[r * d + k];
          df[i * d + k] += s;
        }
    });
  }
  return y;
}

double transform_distance(const EuclideanTransform& a, const EuclideanTransform& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rotation.size(); ++i)
    m = std::max(m, std::abs(a.rotation[i] - b.rotation[i]));
  for (std::size_t i = 0; i < a.translation.size(); ++i)
    m = std::max(m, std::abs(a.translation[i] - b.translation[i]));
  return m;
}

EuclideanTransform random_transform(Group group, std::size_t d, double scale, Rng& rng) {
  if (scale <= 0.0) throw Error("random_transform: scale must be positive");
  std::vector<double> r(d * d, 0.0);
  if (group == Group::T) {
    for (std::size_t i = 0; i < d; ++i) r[i * d + i] = 1.0;
  } else {
    // Modified Gram-Schmidt on a Gaussian matrix; the resulting Q is Haar
    // on O(d) with det +-1 equally likely.
    std::vector<double> g(d * d);
    for (double& v : g) v = rng.normal();
    for (std::size_t col = 0; col < d; ++col) {
      std::vector<double> q(d);
      for (std::size_t i = 0; i < d; ++i) q[i] = g[i * d + col];
      for (std::size_t prev = 0; prev < col; ++prev) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += q[i] * r[i * d + prev];
        for (std::size_t i = 0; i < d; ++i) q[i] -= dot * r[i * d + prev];
      }
      double norm = 0.0;
      for (double v : q) norm += v * v;
      norm = std::sqrt(norm);
      for (std::size_t i = 0; i < d; ++i) r[i * d + col] = q[i] / norm;
    }
    if (!group_allows_reflection(group)) {
      const double det = d == 2 ? det2(r) : det3(r);
      if (det < 0.0)
        for (std::size_t i = 0; i < d; ++i) r[i * d + (d - 1)] = -r[i * d + (d - 1)];
    }
  }
  std::vector<double> t(d, 0.0);
  if (group_has_translation(group))
    for (std::size_t i = 0; i < d; ++i) t[i] = rng.uniform(-scale, scale);
  return EuclideanTransform(d, std::move(r), std::move(t));
}

PointCloud::PointCloud(Tensor coords_in, Tensor features_in)
    : coords(std::move(coords_in)), features(std::move(features_in)) {
  if (!coords.defined() || coords.rank() != 2)
    throw ShapeMismatch("PointCloud: coords must be n x d");
  if (coords.dim(0) == 0) throw EmptyCloud("PointCloud: no points");
  const std::size_t d = coords.dim(1);
  if (d != 2 && d != 3) throw ShapeMismatch("PointCloud: d must be 2 or 3");
  if (!features.defined() || features.rank() != 2 || features.dim(0) != coords.dim(0))
    throw ShapeMismatch("PointCloud: features must be n x c with matching n");
}

}  // namespace fakp
