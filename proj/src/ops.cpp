#include "fakpconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace fakp {

namespace {

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (!t.defined() || t.rank() != r)
    throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(r));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": shapes differ");
}

// Ensures grad buffers exist for every tensor participating in a recorded
// node, so backward() leaves all of them populated (possibly with zeros).
void prealloc_grad(std::initializer_list<Tensor> ts) {
  for (Tensor t : ts)
    if (t.requires_grad()) t.grad_mut();
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), p = b.dim(1);
  if (k != k2)
    throw ShapeMismatch("matmul: inner dimensions " + std::to_string(k) + " and " +
                        std::to_string(k2) + " differ");
  std::vector<double> out(m * p, 0.0);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = av[i * k + l];
      if (ail == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += ail * bv[l * p + j];
    }

  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = Tensor::from_values({m, p}, std::move(out), track);
  if (track) {
    prealloc_grad({a, b, y});
    Tensor ac = a, bc = b, yc = y;
    tape.record([ac, bc, yc, m, k, p]() mutable {
      auto dy = yc.grad();
      if (ac.requires_grad()) {  // dA += dY * B^T
        auto da = ac.grad_mut();
        auto bv = bc.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += dy[i * p + j] * bv[l * p + j];
            da[i * k + l] += s;
          }
      }
      if (bc.requires_grad()) {  // dB += A^T * dY
        auto db = bc.grad_mut();
        auto av = ac.values();
        for (std::size_t l = 0; l < k; ++l)
          for (std::size_t i = 0; i < m; ++i) {
            const double ail = av[i * k + l];
            if (ail == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) db[l * p + j] += ail * dy[i * p + j];
          }
      }
    });
  }
  return y;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tensor y = Tensor::from_values({n, m}, std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    prealloc_grad({a, y});
    Tensor ac = a, yc = y;
    tape.record([ac, yc, m, n]() mutable {
      auto dy = yc.grad();
      auto da = ac.grad_mut();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) da[i * n + j] += dy[j * m + i];
    });
  }
  return y;
}

namespace {

template <typename Fwd>
Tensor binary_elementwise(Tape& tape, const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                          double da_coeff, double db_coeff) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = Tensor::from_values(a.shape(), std::move(out), track);
  if (track) {
    prealloc_grad({a, b, y});
    Tensor ac = a, bc = b, yc = y;
    tape.record([ac, bc, yc, da_coeff, db_coeff]() mutable {
      auto dy = yc.grad();
      if (ac.requires_grad()) {
        auto da = ac.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += da_coeff * dy[i];
      }
      if (bc.requires_grad()) {
        auto db = bc.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += db_coeff * dy[i];
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(tape, a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(tape, a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = Tensor::from_values(a.shape(), std::move(out), track);
  if (track) {
    prealloc_grad({a, b, y});
    Tensor ac = a, bc = b, yc = y;
    tape.record([ac, bc, yc]() mutable {
      auto dy = yc.grad();
      if (ac.requires_grad()) {
        auto da = ac.grad_mut();
        auto bv = bc.values();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += bv[i] * dy[i];
      }
      if (bc.requires_grad()) {
        auto db = bc.grad_mut();
        auto av = ac.values();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += av[i] * dy[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * av[i];
  Tensor y = Tensor::from_values(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    prealloc_grad({a, y});
    Tensor ac = a, yc = y;
    tape.record([ac, yc, s]() mutable {
      auto dy = yc.grad();
      auto da = ac.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += s * dy[i];
    });
  }
  return y;
}

Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "add_rowvec");
  require_rank(v, 1, "add_rowvec");
  const std::size_t n = a.dim(0), c = a.dim(1);
  if (v.dim(0) != c) throw ShapeMismatch("add_rowvec: vector length != column count");
  std::vector<double> out(n * c);
  auto av = a.values(), vv = v.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + vv[j];
  const bool track = a.requires_grad() || v.requires_grad();
  Tensor y = Tensor::from_values({n, c}, std::move(out), track);
  if (track) {
    prealloc_grad({a, v, y});
    Tensor ac = a, vc = v, yc = y;
    tape.record([ac, vc, yc, n, c]() mutable {
      auto dy = yc.grad();
      if (ac.requires_grad()) {
        auto da = ac.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (vc.requires_grad()) {
        auto dv = vc.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) dv[j] += dy[i * c + j];
      }
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& a, std::vector<std::size_t> new_shape) {
  if (shape_size(new_shape) != a.size())
    throw ShapeMismatch("reshape: element count changes");
  std::vector<double> out(a.values().begin(), a.values().end());
  Tensor y = Tensor::from_values(std::move(new_shape), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    prealloc_grad({a, y});
    Tensor ac = a, yc = y;
    tape.record([ac, yc]() mutable {
      auto dy = yc.grad();
      auto da = ac.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    });
  }
  return y;
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  if (slope < 0.0 || slope >= 1.0) throw Error("leaky_relu: slope must be in [0,1)");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  Tensor y = Tensor::from_values(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    prealloc_grad({x, y});
    Tensor xc = x, yc = y;
    tape.record([xc, yc, slope]() mutable {
      auto dy = yc.grad();
      auto dx = xc.grad_mut();
      auto xv = xc.values();
      // Gradient at exactly 0 is slope.
      for (std::size_t i = 0; i < dy.size(); ++i)
        dx[i] += (xv[i] > 0.0 ? 1.0 : slope) * dy[i];
    });
  }
  return y;
}

void BatchNormState::ensure(std::size_t channels) {
  if (running_mean.size() != channels) {
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
  }
}

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, BatchNormState& state, bool training) {
  require_rank(x, 2, "batch_norm");
  require_rank(gamma, 1, "batch_norm");
  require_rank(beta, 1, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (gamma.dim(0) != c || beta.dim(0) != c)
    throw ShapeMismatch("batch_norm: gamma/beta length != channel count");
  if (n == 0) throw ShapeMismatch("batch_norm: empty batch");
  if (eps <= 0.0) throw Error("batch_norm: eps must be positive");
  if (training && n == 1)
    throw DegenerateBatch("batch_norm: variance undefined for a single row in training mode");
  state.ensure(c);

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  auto xv = x.values();
  if (training) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mean[j] += xv[i * c + j];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xv[i * c + j] - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(n);
    for (std::size_t j = 0; j < c; ++j) {
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<double> xhat(n * c), out(n * c);
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xv[i * c + j] - mean[j]) * inv_std[j];
      xhat[i * c + j] = h;
      out[i * c + j] = gv[j] * h + bv[j];
    }

  const bool track = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor y = Tensor::from_values({n, c}, std::move(out), track);
  if (track) {
    prealloc_grad({x, gamma, beta, y});
    Tensor xc = x, gc = gamma, bc = beta, yc = y;
    tape.record([xc, gc, bc, yc, n, c, training, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)]() mutable {
      auto dy = yc.grad();
      if (bc.requires_grad()) {
        auto db = bc.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) db[j] += dy[i * c + j];
      }
      if (gc.requires_grad()) {
        auto dg = gc.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) dg[j] += dy[i * c + j] * xhat[i * c + j];
      }
      if (xc.requires_grad()) {
        auto dx = xc.grad_mut();
        auto gv = gc.values();
        if (training) {
          // Batch moments depend on x, so the gradient removes the batch
          // mean of dxhat and the xhat-projected component.
          std::vector<double> mean_dh(c, 0.0), mean_dh_h(c, 0.0);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = dy[i * c + j] * gv[j];
              mean_dh[j] += dh;
              mean_dh_h[j] += dh * xhat[i * c + j];
            }
          for (std::size_t j = 0; j < c; ++j) {
            mean_dh[j] /= static_cast<double>(n);
            mean_dh_h[j] /= static_cast<double>(n);
          }
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = dy[i * c + j] * gv[j];
              dx[i * c + j] +=
                  inv_std[j] * (dh - mean_dh[j] - xhat[i * c + j] * mean_dh_h[j]);
            }
        } else {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
              dx[i * c + j] += dy[i * c + j] * gv[j] * inv_std[j];
        }
      }
    });
  }
  return y;
}

Tensor reduce(Tape& tape, const Tensor& x, std::size_t axis, ReduceKind kind) {
  if (!x.defined() || x.rank() == 0) throw ShapeMismatch("reduce: rank-0 input");
  if (axis >= x.rank()) throw ShapeMismatch("reduce: axis out of range");
  const std::size_t len = x.dim(axis);
  if (len == 0) throw EmptyAxis("reduce: axis has length 0");

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<std::size_t> out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));

  auto xv = x.values();
  std::vector<double> out(outer * inner, 0.0);
  std::vector<std::size_t> argmax;
  if (kind == ReduceKind::Max) argmax.assign(outer * inner, 0);

  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t oi = o * inner + i;
      if (kind == ReduceKind::Max) {
        double best = xv[(o * len) * inner + i];
        std::size_t best_j = 0;
        for (std::size_t j = 1; j < len; ++j) {
          const double v = xv[(o * len + j) * inner + i];
          if (v > best) {  // ties keep the lowest index
            best = v;
            best_j = j;
          }
        }
        out[oi] = best;
        argmax[oi] = best_j;
      } else {
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j) s += xv[(o * len + j) * inner + i];
        out[oi] = kind == ReduceKind::Mean ? s / static_cast<double>(len) : s;
      }
    }

  Tensor y = Tensor::from_values(std::move(out_shape), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    prealloc_grad({x, y});
    Tensor xc = x, yc = y;
    tape.record([xc, yc, outer, inner, len, kind, argmax = std::move(argmax)]() mutable {
      auto dy = yc.grad();
      auto dx = xc.grad_mut();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t oi = o * inner + i;
          switch (kind) {
            case ReduceKind::Sum:
              for (std::size_t j = 0; j < len; ++j) dx[(o * len + j) * inner + i] += dy[oi];
              break;
            case ReduceKind::Mean:
              for (std::size_t j = 0; j < len; ++j)
                dx[(o * len + j) * inner + i] += dy[oi] / static_cast<double>(len);
              break;
            case ReduceKind::Max:
              dx[(o * len + argmax[oi]) * inner + i] += dy[oi];
              break;
          }
        }
    });
  }
  return y;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor y = Tensor::from_values({}, {s}, x.requires_grad());
  if (x.requires_grad()) {
    prealloc_grad({x, y});
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      const double dy = yc.grad()[0];
      auto dx = xc.grad_mut();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy;
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> idx) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (std::size_t i : idx)
    if (i >= n)
      throw IndexOutOfRange("gather_rows: index " + std::to_string(i) + " >= " +
                            std::to_string(n));
  std::vector<double> out(idx.size() * c);
  auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[idx[r] * c + j];
  Tensor y = Tensor::from_values({idx.size(), c}, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    prealloc_grad({x, y});
    Tensor xc = x, yc = y;
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    tape.record([xc, yc, c, rows = std::move(rows)]() mutable {
      auto dy = yc.grad();
      auto dx = xc.grad_mut();
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) dx[rows[r] * c + j] += dy[r * c + j];
    });
  }
  return y;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no parts");
  const std::size_t c = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t total = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c) throw ShapeMismatch("concat_rows: column counts differ");
    total += p.dim(0);
    track = track || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y = Tensor::from_values({total, c}, std::move(out), track);
  if (track) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    for (Tensor& p : held)
      if (p.requires_grad()) p.grad_mut();
    Tensor yc = y;
    yc.grad_mut();
    tape.record([held = std::move(held), yc]() mutable {
      auto dy = yc.grad();
      std::size_t offset = 0;
      for (Tensor& p : held) {
        const std::size_t sz = p.size();
        if (p.requires_grad()) {
          auto dp = p.grad_mut();
          for (std::size_t i = 0; i < sz; ++i) dp[i] += dy[offset + i];
        }
        offset += sz;
      }
    });
  }
  return y;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t b = logits.dim(0), cls = logits.dim(1);
  if (b == 0) throw EmptyAxis("softmax_cross_entropy: empty batch");
  if (labels.size() != b)
    throw ShapeMismatch("softmax_cross_entropy: label count != batch size");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= cls)
      throw IndexOutOfRange("softmax_cross_entropy: label " + std::to_string(l) +
                            " outside [0, " + std::to_string(cls) + ")");

  auto zv = logits.values();
  std::vector<double> softmax(b * cls);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double m = zv[i * cls];
    for (std::size_t j = 1; j < cls; ++j) m = std::max(m, zv[i * cls + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cls; ++j) sum += std::exp(zv[i * cls + j] - m);
    const double lse = m + std::log(sum);
    for (std::size_t j = 0; j < cls; ++j) softmax[i * cls + j] = std::exp(zv[i * cls + j] - lse);
    loss += lse - zv[i * cls + static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(b);

  Tensor y = Tensor::from_values({}, {loss}, logits.requires_grad());
  if (logits.requires_grad()) {
    prealloc_grad({logits, y});
    Tensor zc = logits, yc = y;
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record([zc, yc, b, cls, softmax = std::move(softmax), lab = std::move(lab)]() mutable {
      const double dy = yc.grad()[0];
      auto dz = zc.grad_mut();
      const double inv_b = 1.0 / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < cls; ++j) {
          const double onehot = j == static_cast<std::size_t>(lab[i]) ? 1.0 : 0.0;
          dz[i * cls + j] += dy * inv_b * (softmax[i * cls + j] - onehot);
        }
    });
  }
  return y;
}

void sgd_step(std::span<Tensor> params, double lr, double momentum, SgdState& state) {
  if (lr <= 0.0) throw Error("sgd_step: lr must be positive");
  if (state.velocity.empty()) state.velocity.resize(params.size());
  if (state.velocity.size() != params.size())
    throw ShapeMismatch("sgd_step: state tracks a different parameter count");
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p];
    if (!t.requires_grad() || !t.has_grad())
      throw MissingGrad("sgd_step: parameter " + std::to_string(p) + " has no gradient");
    auto g = t.grad_mut();
    auto& v = state.velocity[p];
    if (v.empty()) v.assign(t.size(), 0.0);
    if (v.size() != t.size()) throw ShapeMismatch("sgd_step: velocity size mismatch");
    auto val = t.values_mut();
    for (std::size_t i = 0; i < val.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      val[i] -= lr * v[i];
      g[i] = 0.0;
    }
  }
}

}  // namespace fakp
