#include "fakpconv/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fakp {

double finite_difference_max_rel_error(const std::function<Tensor(Tape&)>& make_loss,
                                       std::vector<Tensor> params, double step) {
  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = make_loss(tape);
    tape.backward(loss);
    for (Tensor& p : params) {
      auto g = p.grad();
      analytic.emplace_back(g.begin(), g.end());
      p.zero_grad();
    }
  }
  auto eval_loss = [&]() {
    Tape tape;
    return make_loss(tape).at(0);
  };
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + step;
      const double up = eval_loss();
      vals[i] = keep - step;
      const double down = eval_loss();
      vals[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double frame_set_match_deviation(const std::vector<EuclideanTransform>& got,
                                 const std::vector<EuclideanTransform>& expected) {
  if (got.size() != expected.size()) return std::numeric_limits<double>::infinity();
  std::vector<bool> used(expected.size(), false);
  double worst = 0.0;
  for (const EuclideanTransform& g : got) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = expected.size();
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (used[i]) continue;
      const double dist = transform_distance(g, expected[i]);
      if (dist < best) {
        best = dist;
        best_i = i;
      }
    }
    if (best_i == expected.size()) return std::numeric_limits<double>::infinity();
    used[best_i] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

Tensor random_generic_cloud(Rng& rng, std::size_t n, std::size_t d) {
  const double scales3[3] = {1.2, 0.7, 0.35};
  const double scales2[2] = {1.2, 0.5};
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> coords(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < d; ++a)
        coords[i * d + a] = (d == 3 ? scales3[a] : scales2[a]) * rng.normal();
    Tensor x = Tensor::from_values({n, d}, std::move(coords));
    if (min_relative_eigen_gap(x) >= 1e-2) return x;
  }
  throw DegenerateFrame("random_generic_cloud: no generic sample in 100 attempts");
}

namespace {

constexpr Group kAllGroups[5] = {Group::T, Group::SO, Group::O, Group::SE, Group::E};

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, bool requires_grad,
                     double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// ---------------------------------------------------------------------------
// Test networks
// ---------------------------------------------------------------------------

KPCNNMiniConfig check_model_config(std::uint64_t seed) {
  KPCNNMiniConfig cfg;
  cfg.num_classes = 6;
  cfg.channels = {6, 12, 24};
  cfg.radii = {1.0, 2.0, 4.0};
  cfg.subsample_cells = {0.5, 1.0, 2.0};
  cfg.kernel_points = 7;
  cfg.kernel_method = KernelMethod::Shell;
  cfg.seed = seed;
  return cfg;
}

// Two stacked point convolutions queried at the input points; output n x 3.
struct PointwiseNet {
  KPConvLayer l1, l2;
};

PointwiseNet make_pointwise_net(Rng& rng) {
  PointwiseNet net;
  net.l1 = make_kpconv_layer(5, 3, 6, 2.0, 0.4, KernelMethod::Shell, rng);
  net.l2 = make_kpconv_layer(5, 6, 3, 2.0, 0.4, KernelMethod::Shell, rng);
  return net;
}

Tensor pointwise_forward(Tape& tape, const PointwiseNet& net, const Tensor& x, const Tensor& f) {
  const NeighborLists neighbors = radius_neighbors(x, x, net.l1.radius);
  Tensor h = kpconv_forward(tape, net.l1, x, f, x, neighbors);
  h = leaky_relu(tape, h, 0.1);
  return kpconv_forward(tape, net.l2, x, h, x, neighbors);
}

// Frame average with an optional single-branch truncation (negative control).
Tensor fa_invariant_branches(Tape& tape, const WrappedFunction& wrapped, const Tensor& x,
                             const Tensor& f, bool truncate) {
  Frame frame = build_frame(x, wrapped.group, wrapped.degeneracy_tol);
  if (truncate) frame.elements.resize(1);
  const std::size_t d = x.dim(1);
  std::vector<Tensor> outs;
  for (const EuclideanTransform& g : frame.elements) {
    const EuclideanTransform gi = inverse(g);
    outs.push_back(wrapped.inner(tape, apply(tape, gi, x), act_on_features(tape, gi, f, d)));
  }
  return pairwise_average(tape, std::move(outs));
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

CheckResult check_frame_cardinality() {
  int mismatches = 0;
  const std::size_t expect3[5] = {1, 4, 8, 4, 8};
  const std::size_t expect2[5] = {1, 2, 4, 2, 4};
  for (int gi = 0; gi < 5; ++gi) {
    if (frame_cardinality(kAllGroups[gi], 3) != expect3[gi]) ++mismatches;
    if (frame_cardinality(kAllGroups[gi], 2) != expect2[gi]) ++mismatches;
  }
  // Cardinality of actually-built frames must match the table too.
  Rng rng(7);
  for (std::size_t d : {std::size_t{2}, std::size_t{3}}) {
    Tensor x = random_generic_cloud(rng, 30, d);
    for (Group g : kAllGroups)
      if (build_frame(x, g).elements.size() != frame_cardinality(g, d)) ++mismatches;
  }
  return {"frame_cardinality", static_cast<double>(mismatches), 0.5, mismatches == 0};
}

CheckResult check_frame_equivariance(Group group, const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(10 + static_cast<std::uint64_t>(group));
  double worst = 0.0;
  for (int t = 0; t < opt.trials; ++t) {
    const std::size_t d = t % 2 == 0 ? 3 : 2;
    Tensor x = random_generic_cloud(rng, 24 + t % 9, d);
    const EuclideanTransform g = random_transform(group, d, 1.0, rng);
    Tape tape;
    const Frame direct = build_frame(apply(tape, g, x), group);
    std::vector<EuclideanTransform> composed;
    for (const EuclideanTransform& h : build_frame(x, group).elements)
      composed.push_back(compose(g, h));
    worst = std::max(worst, frame_set_match_deviation(direct.elements, composed));
  }
  return {"frame_equivariance_" + group_name(group), worst, 1e-8, worst < 1e-8};
}

CheckResult check_fa_invariance(Group group, const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(20 + static_cast<std::uint64_t>(group));
  TrainedModel model = build_model(check_model_config(opt.seed), WrapperDescriptor::none());
  WrappedFunction wf;
  wf.inner = [&model](Tape& t, const Tensor& x, const Tensor& f) {
    return kpcnn_forward(t, model, PointCloud(x, f), false);
  };
  wf.group = group;
  wf.mode = WrapMode::Invariant;

  double worst = 0.0;
  for (int t = 0; t < opt.trials; ++t) {
    Tensor x = random_generic_cloud(rng, 40, 3);
    Tensor f = random_tensor(rng, {40, 3}, false);
    const EuclideanTransform g = random_transform(group, 3, 1.0, rng);
    Tape tape;
    Tensor base = fa_invariant_branches(tape, wf, x, f, opt.truncate_frame);
    Tensor moved = fa_invariant_branches(tape, wf, apply(tape, g, x),
                                         act_on_features(tape, g, f, 3), opt.truncate_frame);
    worst = std::max(worst, max_abs_diff(base, moved));
  }
  return {"fa_invariance_" + group_name(group), worst, 1e-9, worst < 1e-9};
}

CheckResult check_fa_equivariance(Group group, const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(30 + static_cast<std::uint64_t>(group));
  Rng net_rng = rng.fork(999);
  const PointwiseNet net = make_pointwise_net(net_rng);
  WrappedFunction wf;
  wf.inner = [&net](Tape& t, const Tensor& x, const Tensor& f) {
    return pointwise_forward(t, net, x, f);
  };
  wf.group = group;
  wf.mode = WrapMode::Equivariant;

  double worst = 0.0;
  for (int t = 0; t < opt.trials; ++t) {
    Tensor x = random_generic_cloud(rng, 30, 3);
    Tensor f = random_tensor(rng, {30, 3}, false);
    const EuclideanTransform g = random_transform(group, 3, 1.0, rng);
    Tape tape;
    Tensor lhs = fa_equivariant(tape, wf, apply(tape, g, x), act_on_features(tape, g, f, 3));
    Tensor rhs = act_on_features(tape, g, fa_equivariant(tape, wf, x, f), 3);
    worst = std::max(worst, max_abs_diff(lhs, rhs));
  }
  return {"fa_equivariance_" + group_name(group), worst, 1e-9, worst < 1e-9};
}

CheckResult check_fa_composed(const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(40);
  Rng net_rng = rng.fork(999);
  const PointwiseNet net = make_pointwise_net(net_rng);
  WrappedFunction wf;
  wf.inner = [&net](Tape& t, const Tensor& x, const Tensor& f) {
    return pointwise_forward(t, net, x, f);
  };
  wf.group = Group::T;
  wf.mode = WrapMode::Invariant;
  wf.composed_with = {{Group::O, WrapMode::Equivariant}};

  double worst = 0.0;
  for (int t = 0; t < opt.trials; ++t) {
    Tensor x = random_generic_cloud(rng, 24, 3);
    Tensor f = random_tensor(rng, {24, 3}, false);
    Tape tape;
    Tensor base = fa_composed(tape, wf, x, f);

    // Translations must leave the output unchanged.
    const EuclideanTransform tr = random_transform(Group::T, 3, 1.0, rng);
    Tensor shifted = fa_composed(tape, wf, apply(tape, tr, x), act_on_features(tape, tr, f, 3));
    worst = std::max(worst, max_abs_diff(base, shifted));

    // Rotations / reflections must transform the output by exactly g.
    const EuclideanTransform rot = random_transform(Group::O, 3, 1.0, rng);
    Tensor rotated =
        fa_composed(tape, wf, apply(tape, rot, x), act_on_features(tape, rot, f, 3));
    worst = std::max(worst, max_abs_diff(rotated, act_on_features(tape, rot, base, 3)));
  }
  return {"fa_composed_t_inv_o_equiv", worst, 1e-9, worst < 1e-9};
}

// Gradient checks: one small case per differentiable op, each loss contracted
// with a fixed random tensor so every output entry gets a distinct adjoint.
std::vector<CheckResult> gradient_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  Rng rng = Rng(opt.seed).fork(50);

  auto weighted_sum = [](Tape& t, const Tensor& y, const Tensor& c) {
    return sum_all(t, mul(t, y, c));
  };
  auto push = [&](const std::string& name, double err) {
    out.push_back({"gradcheck_" + name, err, 1e-5, err < 1e-5});
  };

  {
    Tensor a = random_tensor(rng, {3, 4}, true), b = random_tensor(rng, {4, 2}, true);
    Tensor c = random_tensor(rng, {3, 2}, false);
    push("matmul", finite_difference_max_rel_error(
                       [&](Tape& t) { return weighted_sum(t, matmul(t, a, b), c); }, {a, b}));
  }
  {
    Tensor a = random_tensor(rng, {3, 5}, true);
    Tensor c = random_tensor(rng, {5, 3}, false);
    push("transpose", finite_difference_max_rel_error(
                          [&](Tape& t) { return weighted_sum(t, transpose(t, a), c); }, {a}));
  }
  {
    Tensor a = random_tensor(rng, {2, 3}, true), b = random_tensor(rng, {2, 3}, true);
    Tensor c = random_tensor(rng, {2, 3}, false);
    push("add", finite_difference_max_rel_error(
                    [&](Tape& t) { return weighted_sum(t, add(t, a, b), c); }, {a, b}));
    push("sub", finite_difference_max_rel_error(
                    [&](Tape& t) { return weighted_sum(t, sub(t, a, b), c); }, {a, b}));
    push("mul", finite_difference_max_rel_error(
                    [&](Tape& t) { return weighted_sum(t, mul(t, a, b), c); }, {a, b}));
    push("scale", finite_difference_max_rel_error(
                      [&](Tape& t) { return weighted_sum(t, scale(t, a, -1.7), c); }, {a}));
  }
  {
    Tensor a = random_tensor(rng, {4, 3}, true), v = random_tensor(rng, {3}, true);
    Tensor c = random_tensor(rng, {4, 3}, false);
    push("add_rowvec", finite_difference_max_rel_error(
                           [&](Tape& t) { return weighted_sum(t, add_rowvec(t, a, v), c); },
                           {a, v}));
  }
  {
    Tensor a = random_tensor(rng, {2, 6}, true);
    Tensor c = random_tensor(rng, {3, 4}, false);
    push("reshape",
         finite_difference_max_rel_error(
             [&](Tape& t) { return weighted_sum(t, reshape(t, a, {3, 4}), c); }, {a}));
  }
  {
    // Keep inputs away from the kink at 0.
    Tensor a = random_tensor(rng, {3, 4}, true);
    auto av = a.values_mut();
    for (double& v : av)
      if (std::abs(v) < 1e-3) v = v < 0.0 ? v - 1e-3 : v + 1e-3;
    Tensor c = random_tensor(rng, {3, 4}, false);
    push("leaky_relu", finite_difference_max_rel_error(
                           [&](Tape& t) { return weighted_sum(t, leaky_relu(t, a, 0.1), c); },
                           {a}));
  }
  {
    Tensor x = random_tensor(rng, {6, 4}, true);
    Tensor gamma = random_tensor(rng, {4}, true, 0.5, 1.5);
    Tensor beta = random_tensor(rng, {4}, true);
    Tensor c = random_tensor(rng, {6, 4}, false);
    BatchNormState state;
    push("batch_norm_train",
         finite_difference_max_rel_error(
             [&](Tape& t) {
               return weighted_sum(t, batch_norm(t, x, gamma, beta, 1e-5, state, true), c);
             },
             {x, gamma, beta}));
    BatchNormState eval_state;
    eval_state.ensure(4);
    push("batch_norm_eval",
         finite_difference_max_rel_error(
             [&](Tape& t) {
               return weighted_sum(t, batch_norm(t, x, gamma, beta, 1e-5, eval_state, false), c);
             },
             {x, gamma, beta}));
  }
  {
    Tensor x = random_tensor(rng, {4, 5}, true);
    // Separate potential max ties beyond the finite-difference step.
    auto xv = x.values_mut();
    for (std::size_t col = 0; col < 5; ++col)
      for (std::size_t row = 0; row < 4; ++row) xv[row * 5 + col] += 1e-2 * static_cast<double>(row);
    Tensor c_sum = random_tensor(rng, {5}, false);
    for (auto [kind, name] : {std::pair{ReduceKind::Sum, "reduce_sum"},
                              std::pair{ReduceKind::Mean, "reduce_mean"},
                              std::pair{ReduceKind::Max, "reduce_max"}})
      push(name, finite_difference_max_rel_error(
                     [&, kind = kind](Tape& t) {
                       return weighted_sum(t, reduce(t, x, 0, kind), c_sum);
                     },
                     {x}));
  }
  {
    Tensor x = random_tensor(rng, {5, 3}, true);
    const std::vector<std::size_t> idx{1, 1, 4, 0};  // duplicates exercise scatter-add
    Tensor c = random_tensor(rng, {4, 3}, false);
    push("gather_rows", finite_difference_max_rel_error(
                            [&](Tape& t) { return weighted_sum(t, gather_rows(t, x, idx), c); },
                            {x}));
  }
  {
    Tensor a = random_tensor(rng, {2, 3}, true), b = random_tensor(rng, {3, 3}, true);
    Tensor c = random_tensor(rng, {5, 3}, false);
    push("concat_rows", finite_difference_max_rel_error(
                            [&](Tape& t) {
                              std::vector<Tensor> parts{a, b};
                              return weighted_sum(t, concat_rows(t, parts), c);
                            },
                            {a, b}));
  }
  {
    Tensor z = random_tensor(rng, {3, 4}, true);
    const std::vector<int> labels{2, 0, 3};
    push("softmax_cross_entropy",
         finite_difference_max_rel_error(
             [&](Tape& t) { return softmax_cross_entropy(t, z, labels); }, {z}));
  }
  {
    Rng geo(rng.next_u64());
    const EuclideanTransform g = random_transform(Group::E, 3, 1.0, geo);
    Tensor x = random_tensor(rng, {10, 3}, true);
    Tensor cx = random_tensor(rng, {10, 3}, false);
    push("apply",
         finite_difference_max_rel_error(
             [&](Tape& t) { return weighted_sum(t, apply(t, g, x), cx); }, {x}));
    Tensor f = random_tensor(rng, {10, 6}, true);
    Tensor cf = random_tensor(rng, {10, 6}, false);
    push("act_on_features",
         finite_difference_max_rel_error(
             [&](Tape& t) { return weighted_sum(t, act_on_features(t, g, f, 3), cf); }, {f}));
  }
  {
    Rng geo(rng.next_u64());
    Tensor x = random_generic_cloud(geo, 9, 3);
    Tensor queries = grid_subsample_coords(x, 1.0);
    Rng layer_rng(rng.next_u64());
    KPConvLayer layer = make_kpconv_layer(3, 3, 4, 2.5, 0.5, KernelMethod::Shell, layer_rng);
    Tensor f = random_tensor(rng, {9, 3}, true);
    const NeighborLists neighbors = radius_neighbors(x, queries, layer.radius);
    Tensor c = random_tensor(rng, {queries.dim(0), 4}, false);
    push("kpconv_forward",
         finite_difference_max_rel_error(
             [&](Tape& t) {
               return weighted_sum(t, kpconv_forward(t, layer, x, f, queries, neighbors), c);
             },
             {f, layer.weights}));
  }
  {
    // Composite block: kpconv -> batch_norm -> leaky_relu -> mean pool -> head.
    Rng geo(rng.next_u64());
    Tensor x = random_generic_cloud(geo, 12, 3);
    Tensor queries = grid_subsample_coords(x, 0.8);
    Rng layer_rng(rng.next_u64());
    KPConvLayer layer = make_kpconv_layer(4, 3, 6, 2.0, 0.5, KernelMethod::Shell, layer_rng);
    Tensor f = random_tensor(rng, {12, 3}, true);
    Tensor gamma = random_tensor(rng, {6}, true, 0.5, 1.5);
    Tensor beta = random_tensor(rng, {6}, true);
    Tensor head = random_tensor(rng, {6, 2}, true);
    const NeighborLists neighbors = radius_neighbors(x, queries, layer.radius);
    Tensor c = random_tensor(rng, {1, 2}, false);
    BatchNormState state;
    push("composite_block",
         finite_difference_max_rel_error(
             [&](Tape& t) {
               Tensor h = kpconv_forward(t, layer, x, f, queries, neighbors);
               h = batch_norm(t, h, gamma, beta, 1e-5, state, true);
               h = leaky_relu(t, h, 0.1);
               Tensor pooled = reduce(t, h, 0, ReduceKind::Mean);
               Tensor logits = matmul(t, reshape(t, pooled, {1, 6}), head);
               return weighted_sum(t, logits, c);
             },
             {f, layer.weights, gamma, beta, head}));
  }
  return out;
}

CheckResult check_neighbor_oracle(const CheckOptions& opt, int instances) {
  Rng rng = Rng(opt.seed).fork(60);
  int mismatches = 0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t d = t % 2 == 0 ? 3 : 2;
    const std::size_t n = 1 + rng.uniform_index(60);
    const std::size_t m = 1 + rng.uniform_index(20);
    Tensor x = random_tensor(rng, {n, d}, false);
    Tensor q = random_tensor(rng, {m, d}, false);
    const double r = rng.uniform(0.3, 1.5);
    const auto brute = radius_neighbors(x, q, r, NeighborMethod::BruteForce);
    const auto grid = radius_neighbors(x, q, r, NeighborMethod::Grid);
    for (std::size_t i = 0; i < brute.size(); ++i)
      if (brute[i] != grid[i]) ++mismatches;
  }
  return {"neighbors_grid_vs_bruteforce", static_cast<double>(mismatches), 0.5, mismatches == 0};
}

// Literal evaluation of the convolution sum: builds the full kernel matrix
// h(y) = sum_k corr(y, xk) W_k per neighbor, then f_out = sum_i F_i h(y_i).
Tensor naive_kpconv(const KPConvLayer& layer, const Tensor& x, const Tensor& f,
                    const Tensor& queries, const NeighborLists& neighbors) {
  const std::size_t d = x.dim(1), m = queries.dim(0);
  const std::size_t k = layer.disposition.count(), ci = layer.c_in(), co = layer.c_out();
  auto xv = x.values();
  auto qv = queries.values();
  auto fv = f.values();
  auto wv = layer.weights.values();
  auto kv = layer.disposition.points.values();
  std::vector<double> out(m * co, 0.0);
  for (std::size_t qi = 0; qi < m; ++qi)
    for (std::size_t pi : neighbors[qi]) {
      std::vector<double> y(d);
      for (std::size_t a = 0; a < d; ++a) y[a] = xv[pi * d + a] - qv[qi * d + a];
      std::vector<double> h(ci * co, 0.0);
      for (std::size_t ki = 0; ki < k; ++ki) {
        const double w =
            correlation(y, std::span<const double>(kv.data() + ki * d, d), layer.sigma);
        for (std::size_t ab = 0; ab < ci * co; ++ab) h[ab] += w * wv[ki * ci * co + ab];
      }
      for (std::size_t a = 0; a < ci; ++a)
        for (std::size_t b = 0; b < co; ++b)
          out[qi * co + b] += fv[pi * ci + a] * h[a * co + b];
    }
  return Tensor::from_values({m, co}, std::move(out));
}

CheckResult check_kpconv_oracle(const CheckOptions& opt, int instances) {
  Rng rng = Rng(opt.seed).fork(70);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 3 + rng.uniform_index(18);  // n <= 20
    const std::size_t k = 1 + rng.uniform_index(4);   // K <= 4
    const std::size_t ci = 1 + rng.uniform_index(4), co = 1 + rng.uniform_index(4);
    Tensor x = random_tensor(rng, {n, 3}, false);
    Tensor q = random_tensor(rng, {2 + rng.uniform_index(4), 3}, false);
    Rng layer_rng(rng.next_u64());
    KPConvLayer layer =
        make_kpconv_layer(k, ci, co, rng.uniform(0.8, 2.0), 0.5, KernelMethod::Repulsion,
                          layer_rng);
    Tensor f = random_tensor(rng, {n, ci}, false);
    const NeighborLists neighbors = radius_neighbors(x, q, layer.radius);
    Tape tape;
    Tensor fast = kpconv_forward(tape, layer, x, f, q, neighbors);
    Tensor naive = naive_kpconv(layer, x, f, q, neighbors);
    worst = std::max(worst, max_abs_diff(fast, naive));
  }
  return {"kpconv_vs_naive_oracle", worst, 1e-12, worst < 1e-12};
}

CheckResult check_parameter_census(const CheckOptions& opt) {
  const KPCNNMiniConfig cfg = check_model_config(opt.seed);
  TrainedModel plain = build_model(cfg, WrapperDescriptor::none());
  const std::size_t base = plain.parameter_count();
  double dev = 0.0;
  for (const WrapperDescriptor& w :
       {WrapperDescriptor::invariant(Group::E), WrapperDescriptor::invariant(Group::SE),
        WrapperDescriptor::equivariant(Group::SO), WrapperDescriptor::composed(Group::O)}) {
    TrainedModel wrapped = build_model(cfg, w);
    dev = std::max(dev, std::abs(static_cast<double>(wrapped.parameter_count()) -
                                 static_cast<double>(base)));
  }
  return {"parameter_census", dev, 0.5, dev < 0.5};
}

CheckResult check_invocation_count(const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(80);
  double dev = 0.0;
  for (const auto& [wrapper, expected] :
       {std::pair{WrapperDescriptor::invariant(Group::E), std::size_t{8}},
        std::pair{WrapperDescriptor::invariant(Group::SE), std::size_t{4}},
        std::pair{WrapperDescriptor::invariant(Group::T), std::size_t{1}},
        std::pair{WrapperDescriptor::composed(Group::O), std::size_t{8}}}) {
    TrainedModel model = build_model(check_model_config(opt.seed), wrapper);
    Tensor x = random_generic_cloud(rng, 40, 3);
    PointCloud cloud(x, Tensor::full({40, 3}, 1.0));
    Tape tape;
    kpcnn_forward(tape, model, cloud, false);
    dev = std::max(dev, std::abs(static_cast<double>(model.inner_forward_calls) -
                                 static_cast<double>(expected)));
  }
  return {"fa_invocation_count", dev, 0.5, dev < 0.5};
}

// Negative control: a bare kpconv layer must NOT be rotation invariant.
CheckResult check_rotation_sensitivity(const CheckOptions& opt) {
  Rng rng = Rng(opt.seed).fork(90);
  Rng layer_rng(rng.next_u64());
  KPConvLayer layer = make_kpconv_layer(7, 3, 6, 2.0, 0.4, KernelMethod::Shell, layer_rng);
  Tensor x = random_generic_cloud(rng, 30, 3);
  Tensor f = random_tensor(rng, {30, 3}, false);
  const NeighborLists neighbors = radius_neighbors(x, x, layer.radius);
  Tape tape;
  Tensor base = kpconv_forward(tape, layer, x, f, x, neighbors);
  double best = 0.0;
  for (int t = 0; t < 10; ++t) {
    const EuclideanTransform g = random_transform(Group::SO, 3, 1.0, rng);
    Tensor xr = apply(tape, g, x);
    const NeighborLists rot_neighbors = radius_neighbors(xr, xr, layer.radius);
    Tensor rotated = kpconv_forward(tape, layer, xr, f, xr, rot_neighbors);
    best = std::max(best, max_abs_diff(base, rotated));
  }
  return {"kpconv_rotation_sensitivity_exceeds", best, 1e-3, best > 1e-3};
}

}  // namespace

std::vector<CheckResult> run_property_checks(const CheckOptions& options) {
  std::vector<CheckResult> results;
  results.push_back(check_frame_cardinality());
  for (Group g : kAllGroups) results.push_back(check_frame_equivariance(g, options));
  for (Group g : kAllGroups) results.push_back(check_fa_invariance(g, options));
  for (Group g : kAllGroups) results.push_back(check_fa_equivariance(g, options));
  results.push_back(check_fa_composed(options));
  for (CheckResult& r : gradient_checks(options)) results.push_back(std::move(r));
  results.push_back(check_neighbor_oracle(options, std::max(50, options.trials)));
  results.push_back(check_kpconv_oracle(options, std::max(25, options.trials)));
  results.push_back(check_parameter_census(options));
  results.push_back(check_invocation_count(options));
  results.push_back(check_rotation_sensitivity(options));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace fakp
