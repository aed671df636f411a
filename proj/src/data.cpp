#include "fakpconv/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fakpconv/frames.hpp"

namespace fakp {

std::string shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Plane: return "plane";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "box") return ShapeKind::Box;
  if (name == "torus") return ShapeKind::Torus;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "cone") return ShapeKind::Cone;
  if (name == "plane") return ShapeKind::Plane;
  throw BadShapeKind("unknown shape kind '" + name + "'");
}

void DatasetSpec::validate() const {
  if (classes.empty()) throw EmptyDataset("DatasetSpec: no classes");
  if (points_per_cloud < 16) throw Error("DatasetSpec: points_per_cloud must be >= 16");
  if (!(anisotropy_range.first > 0.0) || !(anisotropy_range.first < anisotropy_range.second))
    throw Error("DatasetSpec: anisotropy range needs 0 < min < max");
  if (train_count < 1 || test_count < 1) throw Error("DatasetSpec: counts must be >= 1");
}

namespace {

// One surface sample of the unit-sized shape, before scaling and noise.
void sample_surface(ShapeKind kind, Rng& rng, double* p) {
  switch (kind) {
    case ShapeKind::Sphere: {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (int a = 0; a < 3; ++a) {
          p[a] = rng.normal();
          norm += p[a] * p[a];
        }
        norm = std::sqrt(norm);
      } while (norm == 0.0);
      for (int a = 0; a < 3; ++a) p[a] /= norm;
      break;
    }
    case ShapeKind::Box: {
      // Uniform over the six faces of [-1,1]^3.
      const std::size_t face = rng.uniform_index(6);
      const int axis = static_cast<int>(face) / 2;
      const double side = face % 2 == 0 ? -1.0 : 1.0;
      for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-1.0, 1.0);
      p[axis] = side;
      break;
    }
    case ShapeKind::Torus: {
      const double major = 1.0, minor = 0.4;
      const double u = rng.uniform(0.0, 2.0 * M_PI);
      const double v = rng.uniform(0.0, 2.0 * M_PI);
      p[0] = (major + minor * std::cos(v)) * std::cos(u);
      p[1] = (major + minor * std::cos(v)) * std::sin(u);
      p[2] = minor * std::sin(v);
      break;
    }
    case ShapeKind::Cylinder: {
      const double radius = 0.7, half_height = 1.0;
      const double side_area = 2.0 * M_PI * radius * 2.0 * half_height;
      const double cap_area = 2.0 * M_PI * radius * radius;
      if (rng.uniform() < side_area / (side_area + cap_area)) {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        p[0] = radius * std::cos(a);
        p[1] = radius * std::sin(a);
        p[2] = rng.uniform(-half_height, half_height);
      } else {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        const double rr = radius * std::sqrt(rng.uniform());
        p[0] = rr * std::cos(a);
        p[1] = rr * std::sin(a);
        p[2] = rng.bernoulli(0.5) ? half_height : -half_height;
      }
      break;
    }
    case ShapeKind::Cone: {
      const double radius = 0.8, height = 1.6;
      const double slant = std::sqrt(radius * radius + height * height);
      const double side_area = M_PI * radius * slant;
      const double base_area = M_PI * radius * radius;
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      if (rng.uniform() < side_area / (side_area + base_area)) {
        const double t = std::sqrt(rng.uniform());  // uniform along the slant by area
        p[0] = radius * t * std::cos(a);
        p[1] = radius * t * std::sin(a);
        p[2] = height * (1.0 - t) - height / 2.0;
      } else {
        const double rr = radius * std::sqrt(rng.uniform());
        p[0] = rr * std::cos(a);
        p[1] = rr * std::sin(a);
        p[2] = -height / 2.0;
      }
      break;
    }
    case ShapeKind::Plane: {
      p[0] = rng.uniform(-1.0, 1.0);
      p[1] = rng.uniform(-1.0, 1.0);
      p[2] = 0.0;
      break;
    }
  }
}

// Per-axis scales from the anisotropy range, redrawn until pairwise
// separated by 1e-2 so no two covariance eigenvalues collide by symmetry.
std::vector<double> draw_scales(std::pair<double, double> range, Rng& rng) {
  constexpr double kSeparation = 1e-2;
  if (range.second - range.first < 3.0 * kSeparation)
    throw Error("generate_shape: anisotropy range too narrow for distinct per-axis scales");
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> s(3);
    for (double& v : s) v = rng.uniform(range.first, range.second);
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a)
      for (int b = a + 1; b < 3; ++b)
        if (std::abs(s[a] - s[b]) < kSeparation) ok = false;
    if (ok) return s;
  }
  throw Error("generate_shape: failed to draw separated anisotropy scales");
}

}  // namespace

PointCloud generate_shape(ShapeKind kind, int n, double noise_std,
                          std::pair<double, double> anisotropy_range, Rng& rng) {
  if (n < 16) throw Error("generate_shape: n must be >= 16");
  if (noise_std < 0.0) throw Error("generate_shape: noise_std must be >= 0");
  constexpr int kMaxAttempts = 10;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::vector<double> scales = draw_scales(anisotropy_range, rng);
    std::vector<double> coords(static_cast<std::size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
      double p[3];
      sample_surface(kind, rng, p);
      for (int a = 0; a < 3; ++a)
        coords[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(a)] =
            scales[static_cast<std::size_t>(a)] * p[a] + noise_std * rng.normal();
    }
    Tensor x = Tensor::from_values({static_cast<std::size_t>(n), 3}, std::move(coords));
    if (min_relative_eigen_gap(x) >= 1e-3) {
      Tensor ones = Tensor::full({static_cast<std::size_t>(n), 3}, 1.0);
      return PointCloud(std::move(x), std::move(ones));
    }
  }
  throw DegenerateFrame("generate_shape: could not reach a generic eigen-spectrum in " +
                        std::to_string(kMaxAttempts) + " attempts");
}

namespace {

LabeledCloud make_sample(const DatasetSpec& spec, const std::string& split, std::size_t class_idx,
                         int index, std::uint64_t stream) {
  Rng rng = Rng(spec.seed).fork(stream);
  LabeledCloud sample{
      generate_shape(spec.classes[class_idx], spec.points_per_cloud, spec.noise_std,
                     spec.anisotropy_range, rng),
      static_cast<int>(class_idx),
      split + "_" + shape_name(spec.classes[class_idx]) + "_" + std::to_string(index)};
  return sample;
}

}  // namespace

std::pair<std::vector<LabeledCloud>, std::vector<LabeledCloud>> make_dataset(
    const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledCloud> train, test;
  // Stream ids: even for train, odd for test, so the seed streams stay
  // disjoint no matter the counts.
  for (std::size_t c = 0; c < spec.classes.size(); ++c)
    for (int i = 0; i < spec.train_count; ++i)
      train.push_back(make_sample(spec, "train", c, i,
                                  2 * (c * static_cast<std::size_t>(spec.train_count) +
                                       static_cast<std::size_t>(i))));
  for (std::size_t c = 0; c < spec.classes.size(); ++c)
    for (int i = 0; i < spec.test_count; ++i)
      test.push_back(make_sample(spec, "test", c, i,
                                 2 * (c * static_cast<std::size_t>(spec.test_count) +
                                      static_cast<std::size_t>(i)) +
                                     1));
  return {std::move(train), std::move(test)};
}

std::vector<LabeledCloud> subset_per_class(const std::vector<LabeledCloud>& samples, int k,
                                           int num_classes) {
  std::vector<int> taken(static_cast<std::size_t>(num_classes), 0);
  std::vector<LabeledCloud> out;
  for (const LabeledCloud& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw IndexOutOfRange("subset_per_class: label outside class range");
    if (taken[static_cast<std::size_t>(s.label)] < k) {
      ++taken[static_cast<std::size_t>(s.label)];
      out.push_back(s);
    }
  }
  return out;
}

PointCloud load_xyz(const std::string& path, std::size_t d) {
  std::ifstream in(path);
  if (!in) throw IoError("load_xyz: cannot open '" + path + "'");
  std::vector<double> coords, feats;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("load_xyz: bad number at line " + std::to_string(line_no));
      }
    }
    if (row.size() < d)
      throw ParseError("load_xyz: fewer than d values at line " + std::to_string(line_no));
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw ParseError("load_xyz: inconsistent column count at line " + std::to_string(line_no));
    coords.insert(coords.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d));
    feats.insert(feats.end(), row.begin() + static_cast<std::ptrdiff_t>(d), row.end());
  }
  if (coords.empty()) throw EmptyCloud("load_xyz: no points in '" + path + "'");
  const std::size_t n = coords.size() / d;
  const std::size_t c = width - d;
  Tensor x = Tensor::from_values({n, d}, std::move(coords));
  Tensor f = c == 0 ? Tensor::full({n, 3}, 1.0) : Tensor::from_values({n, c}, std::move(feats));
  return PointCloud(std::move(x), std::move(f));
}

void save_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw IoError("save_xyz: cannot open '" + path + "' for writing");
  const std::size_t n = cloud.num_points(), d = cloud.dim(), c = cloud.features.dim(1);
  auto xv = cloud.coords.values();
  auto fv = cloud.features.values();
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", xv[i * d + a]);
      out << (a == 0 ? "" : " ") << buf;
    }
    for (std::size_t a = 0; a < c; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", fv[i * c + a]);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("save_xyz: write failed for '" + path + "'");
}

std::vector<LabeledCloud> rotate_dataset(const std::vector<LabeledCloud>& samples,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledCloud> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng sample_rng = rng.fork(i);
    const EuclideanTransform g =
        random_transform(Group::SO, samples[i].cloud.dim(), 1.0, sample_rng);
    Tape tape;  // nothing records: inputs are plain values
    Tensor coords = apply(tape, g, samples[i].cloud.coords);
    Tensor feats = act_on_features(tape, g, samples[i].cloud.features, samples[i].cloud.dim());
    out.push_back({PointCloud(std::move(coords), std::move(feats)), samples[i].label,
                   samples[i].id});
  }
  return out;
}

}  // namespace fakp
