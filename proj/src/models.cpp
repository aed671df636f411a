#include "fakpconv/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace fakp {

void KPCNNMiniConfig::validate() const {
  if (num_classes < 2) throw Error("config: num_classes must be >= 2");
  if (channels.empty() || channels.size() != radii.size() ||
      channels.size() != subsample_cells.size())
    throw ShapeMismatch("config: channels, radii and subsample_cells must have equal length");
  for (int c : channels)
    if (c < 3 || c % 3 != 0) throw NotMultipleOfDim("config: every channel width must be a positive multiple of 3");
  for (double r : radii)
    if (r <= 0.0) throw Error("config: radii must be positive");
  for (double c : subsample_cells)
    if (c <= 0.0) throw Error("config: subsample cells must be positive");
  if (kernel_points < 1) throw BadK("config: kernel_points must be >= 1");
  if (sigma_ratio <= 0.0) throw Error("config: sigma_ratio must be positive");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0) throw Error("config: leaky_slope must be in [0,1)");
  if (bn_eps <= 0.0) throw Error("config: bn_eps must be positive");
  if (lr < 0.0) throw Error("config: lr must be >= 0");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
}

std::vector<Tensor> TrainedModel::parameters() {
  std::vector<Tensor> out;
  for (KPConvBlock& b : blocks) {
    out.push_back(b.layer.weights);
    out.push_back(b.gamma);
    out.push_back(b.beta);
  }
  out.push_back(head_weight);
  out.push_back(head_bias);
  return out;
}

std::size_t TrainedModel::parameter_count() {
  std::size_t n = 0;
  for (Tensor& t : parameters()) n += t.size();
  return n;
}

TrainedModel build_model(const KPCNNMiniConfig& config, const WrapperDescriptor& wrapper) {
  config.validate();
  TrainedModel model;
  model.config = config;
  model.wrapper = wrapper;
  Rng rng(config.seed);

  std::size_t c_in = 3;  // ones-vector input features
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    const auto c_out = static_cast<std::size_t>(config.channels[b]);
    KPConvBlock block;
    block.layer = make_kpconv_layer(static_cast<std::size_t>(config.kernel_points), c_in, c_out,
                                    config.radii[b], config.sigma_ratio, config.kernel_method,
                                    rng);
    block.gamma = Tensor::full({c_out}, 1.0, true);
    block.beta = Tensor::zeros({c_out}, true);
    block.bn_state.ensure(c_out);
    model.blocks.push_back(std::move(block));
    c_in = c_out;
  }

  const auto classes = static_cast<std::size_t>(config.num_classes);
  std::vector<double> hw(c_in * classes);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(c_in));
  for (double& v : hw) v = std_dev * rng.normal();
  model.head_weight = Tensor::from_values({c_in, classes}, std::move(hw), true);
  model.head_bias = Tensor::zeros({classes}, true);
  return model;
}

namespace {

Tensor raw_stack(Tape& tape, TrainedModel& model, const Tensor& coords, const Tensor& features,
                 bool training) {
  ++model.inner_forward_calls;
  const KPCNNMiniConfig& cfg = model.config;
  Tensor x = coords;
  Tensor f = features;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    KPConvBlock& block = model.blocks[b];
    Tensor queries = grid_subsample_coords(x, cfg.subsample_cells[b]);
    const NeighborLists neighbors = radius_neighbors(x, queries, cfg.radii[b]);
    f = kpconv_forward(tape, block.layer, x, f, queries, neighbors);
    f = batch_norm(tape, f, block.gamma, block.beta, cfg.bn_eps, block.bn_state, training);
    f = leaky_relu(tape, f, cfg.leaky_slope);
    x = queries;
  }
  Tensor pooled = reduce(tape, f, 0, ReduceKind::Mean);  // [c_last]
  Tensor h = reshape(tape, pooled, {1, pooled.dim(0)});
  Tensor logits = add_rowvec(tape, matmul(tape, h, model.head_weight), model.head_bias);
  return reshape(tape, logits, {static_cast<std::size_t>(cfg.num_classes)});
}

WrappedFunction wrap_for(TrainedModel& model, bool training) {
  WrappedFunction wf;
  wf.inner = [&model, training](Tape& tape, const Tensor& x, const Tensor& f) {
    return raw_stack(tape, model, x, f, training);
  };
  switch (model.wrapper.kind) {
    case WrapperDescriptor::Kind::Invariant:
      wf.group = model.wrapper.group;
      wf.mode = WrapMode::Invariant;
      break;
    case WrapperDescriptor::Kind::Equivariant:
      wf.group = model.wrapper.group;
      wf.mode = WrapMode::Equivariant;
      break;
    case WrapperDescriptor::Kind::Composed:
      wf.group = Group::T;
      wf.mode = WrapMode::Invariant;
      wf.composed_with = {{model.wrapper.group, WrapMode::Equivariant}};
      break;
    case WrapperDescriptor::Kind::None:
      break;
  }
  return wf;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

Tensor kpcnn_forward(Tape& tape, TrainedModel& model, const PointCloud& cloud, bool training) {
  if (cloud.features.dim(1) != 3)
    throw ShapeMismatch("kpcnn_forward: expected 3-wide input features");
  if (model.wrapper.kind == WrapperDescriptor::Kind::None)
    return raw_stack(tape, model, cloud.coords, cloud.features, training);
  const WrappedFunction wf = wrap_for(model, training);
  return fa_apply(tape, wf, cloud.coords, cloud.features);
}

std::vector<EpochMetrics> train(TrainedModel& model, const std::vector<LabeledCloud>& dataset) {
  if (dataset.empty()) throw EmptyDataset("train: empty dataset");
  for (const LabeledCloud& s : dataset)
    if (s.label < 0 || s.label >= model.config.num_classes)
      throw IndexOutOfRange("train: label outside [0, num_classes)");

  const KPCNNMiniConfig& cfg = model.config;
  std::vector<Tensor> params = model.parameters();
  SgdState sgd;
  Rng shuffle_rng = Rng(cfg.seed).fork(0x5f);  // stream reserved for batch shuffling
  std::vector<EpochMetrics> history;

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> rows;
      std::vector<int> labels;
      for (std::size_t s = start; s < end; ++s) {
        const LabeledCloud& sample = dataset[order[s]];
        Tensor logits = kpcnn_forward(tape, model, sample.cloud, true);
        rows.push_back(reshape(tape, logits, {1, logits.dim(0)}));
        labels.push_back(sample.label);
      }
      Tensor batch_logits = concat_rows(tape, rows);
      Tensor loss = softmax_cross_entropy(tape, batch_logits, labels);
      loss_sum += loss.at(0) * static_cast<double>(end - start);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        auto row = batch_logits.values().subspan(r * batch_logits.dim(1), batch_logits.dim(1));
        if (argmax_lowest(row) == static_cast<std::size_t>(labels[r])) ++correct;
      }
      tape.backward(loss);
      if (cfg.lr > 0.0) {
        sgd_step(params, cfg.lr, cfg.momentum, sgd);
      } else {
        for (Tensor& p : params) p.zero_grad();
      }
    }
    history.push_back({epoch, loss_sum / static_cast<double>(dataset.size()),
                       static_cast<double>(correct) / static_cast<double>(dataset.size())});
  }
  return history;
}

EvalResult overall_accuracy(const std::vector<LabeledCloud>& dataset,
                            const std::function<int(const PointCloud&)>& predict) {
  if (dataset.empty()) throw EmptyDataset("overall_accuracy: empty dataset");
  EvalResult r;
  r.total = dataset.size();
  for (const LabeledCloud& s : dataset)
    if (predict(s.cloud) == s.label) ++r.correct;
  r.overall_accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

EvalResult evaluate(TrainedModel& model, const std::vector<LabeledCloud>& dataset, bool rotate,
                    std::uint64_t seed) {
  if (dataset.empty()) throw EmptyDataset("evaluate: empty dataset");
  const std::vector<LabeledCloud>& used = dataset;
  std::vector<LabeledCloud> rotated;
  if (rotate) rotated = rotate_dataset(dataset, seed);
  return overall_accuracy(rotate ? rotated : used, [&](const PointCloud& cloud) {
    Tape tape;
    Tensor logits = kpcnn_forward(tape, model, cloud, false);
    return static_cast<int>(argmax_lowest(logits.values()));
  });
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'A', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c < 0) throw ParseError("checkpoint: truncated file");
    v |= static_cast<std::uint32_t>(c & 0xff) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c < 0) throw ParseError("checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(c & 0xff) << (8 * i);
  }
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string wrapper_kind_name(WrapperDescriptor::Kind k) {
  switch (k) {
    case WrapperDescriptor::Kind::None: return "none";
    case WrapperDescriptor::Kind::Invariant: return "invariant";
    case WrapperDescriptor::Kind::Equivariant: return "equivariant";
    case WrapperDescriptor::Kind::Composed: return "composed";
  }
  return "?";
}

std::string config_text(const KPCNNMiniConfig& c, const WrapperDescriptor& w) {
  std::ostringstream out;
  out << "num_classes=" << c.num_classes << '\n';
  auto join_ints = [&](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto join_doubles = [&](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s;
  };
  out << "channels=" << join_ints(c.channels) << '\n';
  out << "radii=" << join_doubles(c.radii) << '\n';
  out << "subsample_cells=" << join_doubles(c.subsample_cells) << '\n';
  out << "kernel_points=" << c.kernel_points << '\n';
  out << "sigma_ratio=" << fmt_double(c.sigma_ratio) << '\n';
  out << "leaky_slope=" << fmt_double(c.leaky_slope) << '\n';
  out << "bn_eps=" << fmt_double(c.bn_eps) << '\n';
  out << "lr=" << fmt_double(c.lr) << '\n';
  out << "momentum=" << fmt_double(c.momentum) << '\n';
  out << "epochs=" << c.epochs << '\n';
  out << "batch_size=" << c.batch_size << '\n';
  out << "seed=" << c.seed << '\n';
  out << "kernel_method=" << (c.kernel_method == KernelMethod::Repulsion ? "repulsion" : "shell")
      << '\n';
  out << "wrapper=" << wrapper_kind_name(w.kind) << '\n';
  out << "wrapper_group=" << group_name(w.group) << '\n';
  return out.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::pair<KPCNNMiniConfig, WrapperDescriptor> parse_config_text(const std::string& text) {
  KPCNNMiniConfig c;
  WrapperDescriptor w;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("checkpoint config: missing '=' in " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "num_classes") c.num_classes = std::stoi(val);
    else if (key == "channels") c.channels = split_ints(val);
    else if (key == "radii") c.radii = split_doubles(val);
    else if (key == "subsample_cells") c.subsample_cells = split_doubles(val);
    else if (key == "kernel_points") c.kernel_points = std::stoi(val);
    else if (key == "sigma_ratio") c.sigma_ratio = std::stod(val);
    else if (key == "leaky_slope") c.leaky_slope = std::stod(val);
    else if (key == "bn_eps") c.bn_eps = std::stod(val);
    else if (key == "lr") c.lr = std::stod(val);
    else if (key == "momentum") c.momentum = std::stod(val);
    else if (key == "epochs") c.epochs = std::stoi(val);
    else if (key == "batch_size") c.batch_size = std::stoi(val);
    else if (key == "seed") c.seed = std::stoull(val);
    else if (key == "kernel_method")
      c.kernel_method = val == "shell" ? KernelMethod::Shell : KernelMethod::Repulsion;
    else if (key == "wrapper") {
      if (val == "none") w.kind = WrapperDescriptor::Kind::None;
      else if (val == "invariant") w.kind = WrapperDescriptor::Kind::Invariant;
      else if (val == "equivariant") w.kind = WrapperDescriptor::Kind::Equivariant;
      else if (val == "composed") w.kind = WrapperDescriptor::Kind::Composed;
      else throw ParseError("checkpoint config: bad wrapper '" + val + "'");
    } else if (key == "wrapper_group") {
      w.group = parse_group(val);
    } else {
      throw ParseError("checkpoint config: unknown key '" + key + "'");
    }
  }
  return {c, w};
}

struct NamedState {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};

// Fixed-order view of every tensor the checkpoint persists. Batch-norm
// running buffers are included so a reloaded model evaluates identically.
std::vector<NamedState> named_state(TrainedModel& model) {
  std::vector<NamedState> out;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    KPConvBlock& block = model.blocks[b];
    const std::string prefix = "block" + std::to_string(b) + ".";
    out.push_back({prefix + "weights",
                   block.layer.weights.shape(),
                   block.layer.weights.values_mut()});
    out.push_back({prefix + "gamma", block.gamma.shape(), block.gamma.values_mut()});
    out.push_back({prefix + "beta", block.beta.shape(), block.beta.values_mut()});
    out.push_back({prefix + "bn_mean",
                   {block.bn_state.running_mean.size()},
                   block.bn_state.running_mean});
    out.push_back({prefix + "bn_var",
                   {block.bn_state.running_var.size()},
                   block.bn_state.running_var});
  }
  out.push_back({"head.weight", model.head_weight.shape(), model.head_weight.values_mut()});
  out.push_back({"head.bias", model.head_bias.shape(), model.head_bias.values_mut()});
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = config_text(model.config, model.wrapper);
  put_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto state = named_state(model);
  put_u32(out, static_cast<std::uint32_t>(state.size()));
  for (const NamedState& t : state) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u64(out, d);
    for (double v : t.values) put_f64(out, v);
  }
  if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4))
    throw ParseError("load_checkpoint: bad magic bytes");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw ParseError("load_checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t cfg_len = get_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (static_cast<std::uint64_t>(in.gcount()) != cfg_len)
    throw ParseError("load_checkpoint: truncated config text");

  auto [config, wrapper] = parse_config_text(cfg);
  TrainedModel model = build_model(config, wrapper);
  auto state = named_state(model);

  const std::uint32_t count = get_u32(in);
  if (count != state.size())
    throw ParseError("load_checkpoint: tensor count mismatch");
  for (NamedState& expected : state) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != expected.name)
      throw ParseError("load_checkpoint: expected tensor '" + expected.name + "', found '" +
                       name + "'");
    const std::uint32_t rank = get_u32(in);
    std::vector<std::size_t> dims(rank);
    for (std::uint32_t i = 0; i < rank; ++i) dims[i] = get_u64(in);
    if (dims != expected.shape)
      throw ParseError("load_checkpoint: shape mismatch for '" + name + "'");
    for (double& v : expected.values) v = get_f64(in);
  }
  return model;
}

}  // namespace fakp
