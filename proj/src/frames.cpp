#include "fakpconv/frames.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fakp {

std::vector<double> centroid(const Tensor& x) {
  if (!x.defined() || x.rank() != 2) throw ShapeMismatch("centroid: X must be n x d");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw EmptyCloud("centroid: empty cloud");
  std::vector<double> c(d, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c[j] += xv[i * d + j];
  for (double& v : c) v /= static_cast<double>(n);
  return c;
}

std::vector<double> covariance(const Tensor& x) {
  if (!x.defined() || x.rank() != 2) throw ShapeMismatch("covariance: X must be n x d");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw EmptyCloud("covariance: empty cloud");
  const std::vector<double> c = centroid(x);
  std::vector<double> cov(d * d, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = xv[i * d + a] - c[a];
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += da * (xv[i * d + b] - c[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) cov[a * d + b] = cov[b * d + a];
  return cov;
}

namespace {

double off_diagonal_norm(const std::vector<double>& a, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j) s += a[i * d + j] * a[i * d + j];
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eig(const std::vector<double>& c, std::size_t d) {
  if (d < 2 || d > 3 || c.size() != d * d) throw ShapeMismatch("sym_eig: expected d x d, d in {2,3}");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(c[i * d + j] - c[j * d + i]) >= 1e-9)
        throw NotSymmetric("sym_eig: input is not symmetric");

  std::vector<double> a = c;          // working copy, driven to diagonal
  std::vector<double> q(d * d, 0.0);  // accumulated rotations
  for (std::size_t i = 0; i < d; ++i) q[i * d + i] = 1.0;

  constexpr double kOffTol = 1e-13;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off_diagonal_norm(a, d) >= kOffTol; ++sweep) {
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t qi = p + 1; qi < d; ++qi) {
        const double apq = a[p * d + qi];
        if (apq == 0.0) continue;
        const double theta = (a[qi * d + qi] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        const double tau = sn / (1.0 + cs);

        const double app = a[p * d + p], aqq = a[qi * d + qi];
        a[p * d + p] = app - t * apq;
        a[qi * d + qi] = aqq + t * apq;
        a[p * d + qi] = 0.0;
        a[qi * d + p] = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          if (r != p && r != qi) {
            const double arp = a[r * d + p], arq = a[r * d + qi];
            a[r * d + p] = a[p * d + r] = arp - sn * (arq + tau * arp);
            a[r * d + qi] = a[qi * d + r] = arq + sn * (arp - tau * arq);
          }
          const double qrp = q[r * d + p], qrq = q[r * d + qi];
          q[r * d + p] = qrp - sn * (qrq + tau * qrp);
          q[r * d + qi] = qrq + sn * (qrp - tau * qrq);
        }
      }
  }

  // Sort eigenpairs by descending eigenvalue.
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * d + i] > a[j * d + j]; });

  EigenDecomposition e;
  e.dim = d;
  e.eigenvalues.resize(d);
  e.eigenvectors.assign(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t src = order[k];
    e.eigenvalues[k] = a[src * d + src];
    // Canonical sign: the largest-magnitude entry of each column is
    // positive (lowest index wins exact magnitude ties).
    std::size_t arg = 0;
    double best = std::abs(q[0 * d + src]);
    for (std::size_t r = 1; r < d; ++r) {
      const double m = std::abs(q[r * d + src]);
      if (m > best) {
        best = m;
        arg = r;
      }
    }
    const double sign = q[arg * d + src] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) e.eigenvectors[r * d + k] = sign * q[r * d + src];
  }
  return e;
}

double min_relative_eigen_gap(const Tensor& coords) {
  const EigenDecomposition eig = sym_eig(covariance(coords), coords.dim(1));
  double gap = std::numeric_limits<double>::infinity();
  const double denom = eig.eigenvalues[0] + 1e-12;
  for (std::size_t i = 0; i + 1 < eig.eigenvalues.size(); ++i)
    gap = std::min(gap, (eig.eigenvalues[i] - eig.eigenvalues[i + 1]) / denom);
  return gap;
}

std::size_t frame_cardinality(Group group, std::size_t d) {
  if (d != 2 && d != 3) throw ShapeMismatch("frame_cardinality: d must be 2 or 3");
  switch (group) {
    case Group::T: return 1;
    case Group::SO:
    case Group::SE: return std::size_t{1} << (d - 1);
    case Group::O:
    case Group::E: return std::size_t{1} << d;
  }
  return 0;
}

Frame build_frame(const Tensor& x, Group group, double degeneracy_tol) {
  if (!x.defined() || x.rank() != 2) throw ShapeMismatch("build_frame: X must be n x d");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw EmptyCloud("build_frame: empty cloud");
  if (d != 2 && d != 3) throw ShapeMismatch("build_frame: d must be 2 or 3");

  Frame frame;
  frame.group = group;

  if (!group_needs_eigenbasis(group)) {
    frame.degeneracy_gap = std::numeric_limits<double>::infinity();
    frame.elements.push_back(
        EuclideanTransform(d, EuclideanTransform::identity(d).rotation, centroid(x)));
    return frame;
  }

  if (n < d)
    throw TooFewPoints("build_frame: need at least d points for a full eigenbasis, got " +
                       std::to_string(n));

  const std::vector<double> c = centroid(x);
  const EigenDecomposition eig = sym_eig(covariance(x), d);

  double gap = std::numeric_limits<double>::infinity();
  const double denom = eig.eigenvalues[0] + 1e-12;
  for (std::size_t i = 0; i + 1 < d; ++i)
    gap = std::min(gap, (eig.eigenvalues[i] - eig.eigenvalues[i + 1]) / denom);
  frame.degeneracy_gap = gap;
  if (gap < degeneracy_tol)
    throw DegenerateFrame("build_frame: relative eigenvalue gap " + std::to_string(gap) +
                          " below tolerance " + std::to_string(degeneracy_tol));

  const bool keep_all = group_allows_reflection(group);
  const std::vector<double> t =
      group_has_translation(group) ? c : std::vector<double>(d, 0.0);

  // Sign patterns in lexicographic order with + before -.
  const std::size_t patterns = std::size_t{1} << d;
  for (std::size_t p = 0; p < patterns; ++p) {
    std::vector<double> r(d * d);
    for (std::size_t col = 0; col < d; ++col) {
      const bool flip = (p >> (d - 1 - col)) & 1u;
      const double s = flip ? -1.0 : 1.0;
      for (std::size_t row = 0; row < d; ++row) r[row * d + col] = s * eig.vec(row, col);
    }
    EuclideanTransform g(d, std::move(r), t);
    if (!keep_all && g.det() < 0.0) continue;
    frame.elements.push_back(std::move(g));
  }
  return frame;
}

}  // namespace fakp
