#include "fakpconv/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace fakp {

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  if (train_sizes.empty()) throw Error("config: train_sizes must not be empty");
  for (std::size_t i = 1; i < train_sizes.size(); ++i)
    if (train_sizes[i - 1] >= train_sizes[i])
      throw Error("config: train_sizes must be strictly ascending");
  const int classes = static_cast<int>(data.classes.size());
  for (int ts : train_sizes) {
    if (ts < classes || ts % classes != 0)
      throw Error("config: each train size must be a positive multiple of the class count");
    if (ts / classes > data.train_count)
      throw Error("config: train size exceeds generated samples per class");
  }
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ParseError("bad integer list entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ParseError("empty integer list");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParseError("bad float list entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ParseError("empty float list");
  return out;
}

int parse_int(const std::string& s) {
  try {
    return std::stoi(s);
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + s + "'");
  }
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ParseError("bad float '" + s + "'");
  }
}

bool parse_bool01(const std::string& s) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw ParseError("expected 0 or 1, got '" + s + "'");
}

}  // namespace

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") {
    const auto seed = static_cast<std::uint64_t>(std::stoull(value));
    c.data.seed = seed;
    c.model.seed = seed;
  } else if (key == "group") {
    c.group = parse_group(value);
  } else if (key == "mode") {
    if (value == "none") c.mode = ExperimentConfig::Mode::None;
    else if (value == "invariant") c.mode = ExperimentConfig::Mode::Invariant;
    else if (value == "equivariant") c.mode = ExperimentConfig::Mode::Equivariant;
    else if (value == "composed") c.mode = ExperimentConfig::Mode::Composed;
    else throw ParseError("bad mode '" + value + "'");
  } else if (key == "train-sizes") {
    c.train_sizes = parse_int_list(value);
  } else if (key == "rotate-test") {
    c.rotate_test = parse_bool01(value);
  } else if (key == "out") {
    c.out_dir = value;
  } else if (key == "points") {
    c.data.points_per_cloud = parse_int(value);
  } else if (key == "noise") {
    c.data.noise_std = parse_double(value);
  } else if (key == "anisotropy-min") {
    c.data.anisotropy_range.first = parse_double(value);
  } else if (key == "anisotropy-max") {
    c.data.anisotropy_range.second = parse_double(value);
  } else if (key == "train-per-class") {
    c.data.train_count = parse_int(value);
  } else if (key == "test-per-class") {
    c.data.test_count = parse_int(value);
  } else if (key == "channels") {
    c.model.channels = parse_int_list(value);
  } else if (key == "radii") {
    c.model.radii = parse_double_list(value);
  } else if (key == "cells") {
    c.model.subsample_cells = parse_double_list(value);
  } else if (key == "kernel-points") {
    c.model.kernel_points = parse_int(value);
  } else if (key == "sigma-ratio") {
    c.model.sigma_ratio = parse_double(value);
  } else if (key == "leaky-slope") {
    c.model.leaky_slope = parse_double(value);
  } else if (key == "lr") {
    c.model.lr = parse_double(value);
  } else if (key == "momentum") {
    c.model.momentum = parse_double(value);
  } else if (key == "epochs") {
    c.model.epochs = parse_int(value);
  } else if (key == "batch-size") {
    c.model.batch_size = parse_int(value);
  } else if (key == "kernel-method") {
    if (value == "repulsion") c.model.kernel_method = KernelMethod::Repulsion;
    else if (value == "shell") c.model.kernel_method = KernelMethod::Shell;
    else throw ParseError("bad kernel-method '" + value + "'");
  } else {
    throw ParseError("unknown config key '" + key + "'");
  }
}

void load_config_file(ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key=value");
    apply_override(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

void write_dataset(const std::string& dir, const std::string& split,
                   const std::vector<LabeledCloud>& samples) {
  const fs::path base = fs::path(dir) / split;
  fs::create_directories(base);
  std::ofstream manifest(fs::path(dir) / (split + ".manifest"));
  if (!manifest) throw IoError("cannot write manifest for split " + split);
  for (const LabeledCloud& s : samples) {
    const std::string rel = split + "/" + s.id + ".xyz";
    save_xyz((fs::path(dir) / rel).string(), s.cloud);
    manifest << s.id << ' ' << s.label << ' ' << rel << '\n';
  }
}

std::vector<LabeledCloud> read_dataset(const std::string& dir, const std::string& split) {
  const fs::path manifest_path = fs::path(dir) / (split + ".manifest");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  std::vector<LabeledCloud> out;
  std::string id, rel;
  int label = 0;
  while (manifest >> id >> label >> rel)
    out.push_back({load_xyz((fs::path(dir) / rel).string()), label, id});
  if (out.empty()) throw EmptyDataset("manifest '" + manifest_path.string() + "' lists no samples");
  return out;
}

int cmd_gen(const ExperimentConfig& config, std::ostream& out) {
  config.data.validate();
  const auto [train, test] = make_dataset(config.data);
  const std::string dir = (fs::path(config.out_dir) / "data").string();
  write_dataset(dir, "train", train);
  write_dataset(dir, "test", test);
  out << "wrote " << train.size() << " train and " << test.size() << " test clouds under " << dir
      << "\n";
  return 0;
}

namespace {

std::string format_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

WrapperDescriptor wrapper_from(const ExperimentConfig& c) {
  switch (c.mode) {
    case ExperimentConfig::Mode::Invariant: return WrapperDescriptor::invariant(c.group);
    case ExperimentConfig::Mode::Equivariant: return WrapperDescriptor::equivariant(c.group);
    case ExperimentConfig::Mode::Composed: return WrapperDescriptor::composed(c.group);
    case ExperimentConfig::Mode::None: break;
  }
  return WrapperDescriptor::none();
}

const char* mode_name(ExperimentConfig::Mode m) {
  switch (m) {
    case ExperimentConfig::Mode::None: return "none";
    case ExperimentConfig::Mode::Invariant: return "invariant";
    case ExperimentConfig::Mode::Equivariant: return "equivariant";
    case ExperimentConfig::Mode::Composed: return "composed";
  }
  return "?";
}

}  // namespace

int cmd_train(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  if (config.mode == ExperimentConfig::Mode::None)
    throw Error("train: mode must name a wrapper for the fa variant (invariant|equivariant|composed)");
  const std::string data_dir = (fs::path(config.out_dir) / "data").string();
  const std::vector<LabeledCloud> train_all = read_dataset(data_dir, "train");
  const std::vector<LabeledCloud> test_set = read_dataset(data_dir, "test");
  const int classes = static_cast<int>(config.data.classes.size());

  fs::create_directories(config.out_dir);
  std::ofstream metrics(fs::path(config.out_dir) / "metrics.csv");
  if (!metrics) throw IoError("cannot write metrics.csv");
  metrics << kMetricsHeader << '\n';

  for (int ts : config.train_sizes) {
    const std::vector<LabeledCloud> subset = subset_per_class(train_all, ts / classes, classes);
    for (const bool is_fa : {false, true}) {
      const std::string variant = is_fa ? "fa" : "baseline";
      KPCNNMiniConfig mc = config.model;
      mc.num_classes = classes;
      TrainedModel model =
          build_model(mc, is_fa ? wrapper_from(config) : WrapperDescriptor::none());
      const auto history = train(model, subset);

      const std::string tag = variant + "_" + std::to_string(ts);
      {
        std::ofstream curves(fs::path(config.out_dir) / ("curves_" + tag + ".csv"));
        curves << "epoch,train_loss,train_accuracy\n";
        for (const EpochMetrics& m : history)
          curves << m.epoch << ',' << format_accuracy(m.train_loss) << ','
                 << format_accuracy(m.train_accuracy) << '\n';
      }
      save_checkpoint((fs::path(config.out_dir) / ("ckpt_" + tag + ".fakp")).string(), model);

      for (const bool rotated : {false, true}) {
        if (rotated && !config.rotate_test) continue;
        const EvalResult r =
            evaluate(model, test_set, rotated, Rng(config.data.seed).fork(0xe0a1).next_u64());
        metrics << variant << ',' << (is_fa ? group_name(config.group) : "-") << ','
                << (is_fa ? mode_name(config.mode) : "none") << ',' << ts << ','
                << (rotated ? 1 : 0) << ',' << format_accuracy(r.overall_accuracy) << ','
                << config.model.epochs << ',' << config.data.seed << '\n';
        out << tag << (rotated ? " rotated" : " original") << " OA "
            << format_accuracy(r.overall_accuracy) << "\n";
      }
    }
  }
  out << "metrics written to " << (fs::path(config.out_dir) / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_check(const ExperimentConfig& config, std::ostream& out) {
  CheckOptions opt;
  opt.seed = config.data.seed;
  const auto results = run_property_checks(opt);
  std::size_t width = 0;
  for (const CheckResult& r : results) width = std::max(width, r.name.size());
  for (const CheckResult& r : results) {
    out << "check " << std::left << std::setw(static_cast<int>(width)) << r.name << "  max dev "
        << std::scientific << std::setprecision(3) << r.deviation << "  (tol " << r.tolerance
        << ")  " << (r.pass ? "PASS" : "FAIL") << '\n'
        << std::defaultfloat;
  }
  const bool ok = all_passed(results);
  out << (ok ? "all checks passed" : "CHECK FAILURES PRESENT") << '\n';
  return ok ? 0 : 1;
}

namespace {

struct MetricsRow {
  std::string variant, group, mode, train_size, test_rotated, overall_accuracy, epochs, seed;
};

std::vector<MetricsRow> parse_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw ParseError("metrics file is empty (missing header)");
  if (header != kMetricsHeader)
    throw ParseError("unexpected metrics header '" + header + "'");
  std::vector<MetricsRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) cols.push_back(tok);
    if (cols.size() != 8)
      throw ParseError("metrics line " + std::to_string(line_no) + ": expected 8 columns");
    rows.push_back({cols[0], cols[1], cols[2], cols[3], cols[4], cols[5], cols[6], cols[7]});
  }
  return rows;
}

}  // namespace

int cmd_report(const std::string& metrics_csv, std::ostream& out) {
  const std::vector<MetricsRow> rows = parse_metrics(metrics_csv);
  if (rows.empty()) {
    out << "no results\n";
    return 0;
  }
  // Row order of first appearance; cells hold the CSV accuracy text verbatim.
  std::vector<std::string> sizes;
  for (const MetricsRow& r : rows)
    if (std::find(sizes.begin(), sizes.end(), r.train_size) == sizes.end())
      sizes.push_back(r.train_size);

  auto cell = [&](const std::string& size, const std::string& variant,
                  const std::string& rotated) -> std::string {
    for (const MetricsRow& r : rows)
      if (r.train_size == size && r.variant == variant && r.test_rotated == rotated)
        return r.overall_accuracy;
    return "-";
  };

  out << "overall accuracy by train size\n";
  out << std::left << std::setw(12) << "train_size" << std::setw(20) << "baseline/original"
      << std::setw(20) << "baseline/rotated" << std::setw(20) << "fa/original" << std::setw(20)
      << "fa/rotated" << '\n';
  for (const std::string& size : sizes) {
    out << std::left << std::setw(12) << size << std::setw(20) << cell(size, "baseline", "0")
        << std::setw(20) << cell(size, "baseline", "1") << std::setw(20)
        << cell(size, "fa", "0") << std::setw(20) << cell(size, "fa", "1") << '\n';
  }
  out << "\ndegradation (original - rotated)\n";
  for (const std::string& size : sizes) {
    auto delta = [&](const std::string& variant) -> std::string {
      const std::string o = cell(size, variant, "0"), r = cell(size, variant, "1");
      if (o == "-" || r == "-") return "-";
      return format_accuracy(std::stod(o) - std::stod(r));
    };
    out << std::left << std::setw(12) << size << std::setw(20) << delta("baseline")
        << std::setw(20) << delta("fa") << '\n';
  }
  return 0;
}

}  // namespace fakp
