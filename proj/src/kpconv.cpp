#include "fakpconv/kpconv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace fakp {

namespace {

// Uniform point in the d-ball of the given radius.
std::vector<double> sample_in_ball(std::size_t d, double radius, Rng& rng) {
  std::vector<double> p(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : p) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  } while (norm == 0.0);
  const double rad = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  for (double& v : p) v *= rad / norm;
  return p;
}

void project_into_ball(std::span<double> p, double radius) {
  double norm = 0.0;
  for (double v : p) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > radius)
    for (double& v : p) v *= radius / norm;
}

std::vector<double> repulsion_points(std::size_t k, double r, std::size_t d, Rng& rng) {
  std::vector<double> pts(k * d, 0.0);  // point 0 stays at the origin
  for (std::size_t i = 1; i < k; ++i) {
    const auto p = sample_in_ball(d, r, rng);
    std::copy(p.begin(), p.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  // Energy: sum of pairwise inverse distances plus sum of ||x||^2 pulling
  // toward the origin; minimized by projected gradient descent.
  const int iterations = 1000;
  const double step = 0.01 * r;
  std::vector<double> grad(k * d);
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 1; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (j == i) continue;
        std::array<double, 3> diff{0, 0, 0};
        double dist2 = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          diff[a] = pts[i * d + a] - pts[j * d + a];
          dist2 += diff[a] * diff[a];
        }
        const double dist = std::max(std::sqrt(dist2), 1e-9 * r);
        const double inv3 = 1.0 / (dist * dist * dist);
        for (std::size_t a = 0; a < d; ++a) grad[i * d + a] -= diff[a] * inv3;
      }
      for (std::size_t a = 0; a < d; ++a) grad[i * d + a] += 2.0 * pts[i * d + a];
    }
    for (std::size_t i = 1; i < k; ++i) {
      for (std::size_t a = 0; a < d; ++a) pts[i * d + a] -= step * grad[i * d + a];
      project_into_ball(std::span<double>(pts).subspan(i * d, d), r);
    }
  }
  return pts;
}

std::vector<double> shell_points(std::size_t k, double r, std::size_t d) {
  std::vector<double> pts(k * d, 0.0);
  const double shell = 0.66 * r;
  const std::size_t m = k - 1;
  if (m == 0) return pts;
  if (d == 2) {
    for (std::size_t i = 0; i < m; ++i) {
      const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(m);
      pts[(i + 1) * d + 0] = shell * std::cos(a);
      pts[(i + 1) * d + 1] = shell * std::sin(a);
    }
    return pts;
  }
  if (k == 13) {
    // Icosahedron vertices: cyclic (0, +-1, +-phi), normalized to the shell.
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double scale = shell / std::sqrt(1.0 + phi * phi);
    const double vertices[12][3] = {
        {0, 1, phi},  {0, 1, -phi},  {0, -1, phi},  {0, -1, -phi},
        {1, phi, 0},  {1, -phi, 0},  {-1, phi, 0},  {-1, -phi, 0},
        {phi, 0, 1},  {-phi, 0, 1},  {phi, 0, -1},  {-phi, 0, -1},
    };
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t a = 0; a < 3; ++a) pts[(i + 1) * 3 + a] = scale * vertices[i][a];
    return pts;
  }
  // Golden-spiral points on the shell sphere.
  const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < m; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden_angle * static_cast<double>(i);
    pts[(i + 1) * 3 + 0] = shell * rho * std::cos(a);
    pts[(i + 1) * 3 + 1] = shell * rho * std::sin(a);
    pts[(i + 1) * 3 + 2] = shell * z;
  }
  return pts;
}

}  // namespace

KernelDisposition dispose_kernel_points(std::size_t k, double r, KernelMethod method,
                                        std::uint64_t seed, std::size_t d) {
  if (k < 1) throw BadK("dispose_kernel_points: K must be >= 1");
  if (r <= 0.0) throw Error("dispose_kernel_points: radius must be positive");
  if (d != 2 && d != 3) throw ShapeMismatch("dispose_kernel_points: d must be 2 or 3");
  std::vector<double> pts;
  if (method == KernelMethod::Repulsion) {
    Rng rng(seed);
    pts = repulsion_points(k, r, d, rng);
  } else {
    pts = shell_points(k, r, d);
  }
  KernelDisposition disp;
  disp.points = Tensor::from_values({k, d}, std::move(pts));
  disp.radius = r;
  return disp;
}

double correlation(std::span<const double> y, std::span<const double> xk, double sigma) {
  if (sigma <= 0.0) throw Error("correlation: sigma must be positive");
  double dist2 = 0.0;
  for (std::size_t a = 0; a < y.size(); ++a) {
    const double diff = y[a] - xk[a];
    dist2 += diff * diff;
  }
  return std::max(0.0, 1.0 - std::sqrt(dist2) / sigma);
}

NeighborLists radius_neighbors(const Tensor& x, const Tensor& queries, double r,
                               NeighborMethod method) {
  if (!x.defined() || x.rank() != 2 || !queries.defined() || queries.rank() != 2 ||
      x.dim(1) != queries.dim(1))
    throw ShapeMismatch("radius_neighbors: X and queries must share d");
  if (r <= 0.0) throw Error("radius_neighbors: radius must be positive");
  const std::size_t n = x.dim(0), m = queries.dim(0), d = x.dim(1);
  const double r2 = r * r;
  auto xv = x.values();
  auto qv = queries.values();
  NeighborLists out(m);

  auto within = [&](std::size_t pi, std::size_t qi) {
    double dist2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double diff = xv[pi * d + a] - qv[qi * d + a];
      dist2 += diff * diff;
    }
    return dist2 <= r2;
  };

  if (method == NeighborMethod::BruteForce) {
    for (std::size_t qi = 0; qi < m; ++qi)
      for (std::size_t pi = 0; pi < n; ++pi)
        if (within(pi, qi)) out[qi].push_back(pi);
    return out;
  }

  // Cells of side r: any point within r of a query lies in one of the 3^d
  // cells around the query's cell.
  using Cell = std::array<long long, 3>;
  std::map<Cell, std::vector<std::size_t>> cells;
  auto cell_of = [&](const double* p) {
    Cell c{0, 0, 0};
    for (std::size_t a = 0; a < d; ++a)
      c[a] = static_cast<long long>(std::floor(p[a] / r));
    return c;
  };
  for (std::size_t pi = 0; pi < n; ++pi) cells[cell_of(&xv[pi * d])].push_back(pi);

  for (std::size_t qi = 0; qi < m; ++qi) {
    const Cell base = cell_of(&qv[qi * d]);
    Cell c = base;
    const long long z_lo = d == 3 ? base[2] - 1 : 0;
    const long long z_hi = d == 3 ? base[2] + 1 : 0;
    for (long long cx = base[0] - 1; cx <= base[0] + 1; ++cx)
      for (long long cy = base[1] - 1; cy <= base[1] + 1; ++cy)
        for (long long cz = z_lo; cz <= z_hi; ++cz) {
          c = {cx, cy, cz};
          auto it = cells.find(c);
          if (it == cells.end()) continue;
          for (std::size_t pi : it->second)
            if (within(pi, qi)) out[qi].push_back(pi);
        }
    std::sort(out[qi].begin(), out[qi].end());
  }
  return out;
}

KPConvLayer make_kpconv_layer(std::size_t k, std::size_t c_in, std::size_t c_out, double radius,
                              double sigma_ratio, KernelMethod method, Rng& rng) {
  KPConvLayer layer;
  layer.disposition = dispose_kernel_points(k, radius, method, rng.next_u64());
  layer.radius = radius;
  layer.sigma = sigma_ratio * radius;
  std::vector<double> w(k * c_in * c_out);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(k * c_in));
  for (double& v : w) v = std_dev * rng.normal();
  layer.weights = Tensor::from_values({k, c_in, c_out}, std::move(w), true);
  return layer;
}

namespace {

// Walks every (neighbor, kernel-point) pair with a positive correlation for
// one query; shared by the forward and backward passes so both see the
// exact same sparsity pattern.
template <typename Visit>
void visit_query(const KPConvLayer& layer, std::span<const double> xv,
                 std::span<const double> qv, std::size_t qi,
                 const std::vector<std::size_t>& list, std::size_t d, Visit visit) {
  const std::size_t k = layer.disposition.count();
  auto kv = layer.disposition.points.values();
  const double r2 = layer.radius * layer.radius;
  for (std::size_t pi : list) {
    std::array<double, 3> y{0, 0, 0};
    double dist2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      y[a] = xv[pi * d + a] - qv[qi * d + a];
      dist2 += y[a] * y[a];
    }
    if (dist2 > r2 * (1.0 + 1e-12))
      throw NeighborRadiusMismatch(
          "kpconv_forward: neighbor list references a point beyond the layer radius");
    for (std::size_t ki = 0; ki < k; ++ki) {
      double kd2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = y[a] - kv[ki * d + a];
        kd2 += diff * diff;
      }
      const double w = 1.0 - std::sqrt(kd2) / layer.sigma;
      if (w > 0.0) visit(pi, ki, w);
    }
  }
}

}  // namespace

Tensor kpconv_forward(Tape& tape, const KPConvLayer& layer, const Tensor& x, const Tensor& f,
                      const Tensor& queries, const NeighborLists& neighbors) {
  if (!x.defined() || x.rank() != 2 || !queries.defined() || queries.rank() != 2)
    throw ShapeMismatch("kpconv_forward: coordinates must be rank 2");
  const std::size_t d = x.dim(1);
  if (queries.dim(1) != d) throw ShapeMismatch("kpconv_forward: query dimension mismatch");
  if (layer.disposition.dim() != d)
    throw ShapeMismatch("kpconv_forward: kernel disposition dimension mismatch");
  if (!f.defined() || f.rank() != 2 || f.dim(0) != x.dim(0))
    throw ShapeMismatch("kpconv_forward: features must be n x c_in");
  if (f.dim(1) != layer.c_in()) throw ShapeMismatch("kpconv_forward: c_in mismatch");
  if (neighbors.size() != queries.dim(0))
    throw ShapeMismatch("kpconv_forward: one neighbor list per query required");
  for (const auto& list : neighbors)
    for (std::size_t pi : list)
      if (pi >= x.dim(0)) throw IndexOutOfRange("kpconv_forward: neighbor index out of range");

  const std::size_t m = queries.dim(0), k = layer.disposition.count();
  const std::size_t c_in = layer.c_in(), c_out = layer.c_out();
  auto xv = x.values();
  auto qv = queries.values();
  auto fv = f.values();
  auto wv = layer.weights.values();

  // Per query: s_k = sum_i corr * F_i, then out = sum_k s_k W_k.
  std::vector<double> out(m * c_out, 0.0);
  std::vector<double> sk(k * c_in);
  for (std::size_t qi = 0; qi < m; ++qi) {
    std::fill(sk.begin(), sk.end(), 0.0);
    visit_query(layer, xv, qv, qi, neighbors[qi], d,
                [&](std::size_t pi, std::size_t ki, double w) {
                  for (std::size_t a = 0; a < c_in; ++a)
                    sk[ki * c_in + a] += w * fv[pi * c_in + a];
                });
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t a = 0; a < c_in; ++a) {
        const double s = sk[ki * c_in + a];
        if (s == 0.0) continue;
        const double* wrow = &wv[(ki * c_in + a) * c_out];
        for (std::size_t b = 0; b < c_out; ++b) out[qi * c_out + b] += s * wrow[b];
      }
  }

  const bool track = f.requires_grad() || layer.weights.requires_grad();
  Tensor y = Tensor::from_values({m, c_out}, std::move(out), track);
  if (track) {
    Tensor fc = f, wc = layer.weights, yc = y;
    if (fc.requires_grad()) fc.grad_mut();
    if (wc.requires_grad()) wc.grad_mut();
    yc.grad_mut();
    // Correlations are cheap enough to recompute in the backward pass;
    // capture only what the recomputation needs.
    KPConvLayer snapshot = layer;
    std::vector<double> x_vals(xv.begin(), xv.end());
    std::vector<double> q_vals(qv.begin(), qv.end());
    NeighborLists neigh = neighbors;
    tape.record([fc, wc, yc, snapshot = std::move(snapshot), x_vals = std::move(x_vals),
                 q_vals = std::move(q_vals), neigh = std::move(neigh), d, c_in, c_out]() mutable {
      auto dy = yc.grad();
      auto fv = fc.values();
      auto wv = wc.values();
      const bool want_df = fc.requires_grad();
      const bool want_dw = wc.requires_grad();
      auto df = want_df ? fc.grad_mut() : std::span<double>();
      auto dw = want_dw ? wc.grad_mut() : std::span<double>();
      for (std::size_t qi = 0; qi < neigh.size(); ++qi) {
        const double* dy_row = &dy[qi * c_out];
        visit_query(snapshot, x_vals, q_vals, qi, neigh[qi], d,
                    [&](std::size_t pi, std::size_t ki, double w) {
                      if (want_dw) {
                        for (std::size_t a = 0; a < c_in; ++a) {
                          const double coeff = w * fv[pi * c_in + a];
                          double* dw_row = &dw[(ki * c_in + a) * c_out];
                          for (std::size_t b = 0; b < c_out; ++b) dw_row[b] += coeff * dy_row[b];
                        }
                      }
                      if (want_df) {
                        for (std::size_t a = 0; a < c_in; ++a) {
                          const double* w_row = &wv[(ki * c_in + a) * c_out];
                          double s = 0.0;
                          for (std::size_t b = 0; b < c_out; ++b) s += w_row[b] * dy_row[b];
                          df[pi * c_in + a] += w * s;
                        }
                      }
                    });
      }
    });
  }
  return y;
}

namespace {

using CellKey = std::array<long long, 3>;

std::map<CellKey, std::vector<std::size_t>> bucket_points(const Tensor& x, double cell) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto xv = x.values();
  std::array<double, 3> lo{0, 0, 0};
  for (std::size_t a = 0; a < d; ++a) {
    lo[a] = xv[a];
    for (std::size_t i = 1; i < n; ++i) lo[a] = std::min(lo[a], xv[i * d + a]);
  }
  std::map<CellKey, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    CellKey key{0, 0, 0};
    for (std::size_t a = 0; a < d; ++a)
      key[a] = static_cast<long long>(std::floor((xv[i * d + a] - lo[a]) / cell));
    cells[key].push_back(i);
  }
  return cells;
}

}  // namespace

std::pair<Tensor, Tensor> grid_subsample(const Tensor& x, const Tensor& f, double cell) {
  if (!x.defined() || x.rank() != 2) throw ShapeMismatch("grid_subsample: X must be n x d");
  if (!f.defined() || f.rank() != 2 || f.dim(0) != x.dim(0))
    throw ShapeMismatch("grid_subsample: features must match point count");
  if (cell <= 0.0) throw Error("grid_subsample: cell must be positive");
  const std::size_t d = x.dim(1), c = f.dim(1);
  auto xv = x.values();
  auto fv = f.values();
  const auto cells = bucket_points(x, cell);  // std::map iterates in lexicographic key order
  std::vector<double> coords, feats;
  coords.reserve(cells.size() * d);
  feats.reserve(cells.size() * c);
  for (const auto& [key, members] : cells) {
    std::vector<double> xm(d, 0.0), fm(c, 0.0);
    for (std::size_t i : members) {
      for (std::size_t a = 0; a < d; ++a) xm[a] += xv[i * d + a];
      for (std::size_t a = 0; a < c; ++a) fm[a] += fv[i * c + a];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (double v : xm) coords.push_back(v * inv);
    for (double v : fm) feats.push_back(v * inv);
  }
  return {Tensor::from_values({cells.size(), d}, std::move(coords)),
          Tensor::from_values({cells.size(), c}, std::move(feats))};
}

Tensor grid_subsample_coords(const Tensor& x, double cell) {
  if (!x.defined() || x.rank() != 2) throw ShapeMismatch("grid_subsample: X must be n x d");
  if (cell <= 0.0) throw Error("grid_subsample: cell must be positive");
  const std::size_t d = x.dim(1);
  auto xv = x.values();
  const auto cells = bucket_points(x, cell);
  std::vector<double> coords;
  coords.reserve(cells.size() * d);
  for (const auto& [key, members] : cells) {
    std::vector<double> xm(d, 0.0);
    for (std::size_t i : members)
      for (std::size_t a = 0; a < d; ++a) xm[a] += xv[i * d + a];
    const double inv = 1.0 / static_cast<double>(members.size());
    for (double v : xm) coords.push_back(v * inv);
  }
  return Tensor::from_values({cells.size(), d}, std::move(coords));
}

}  // namespace fakp
