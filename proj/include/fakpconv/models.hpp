#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fakpconv/data.hpp"
#include "fakpconv/fa.hpp"
#include "fakpconv/kpconv.hpp"
#include "fakpconv/ops.hpp"

namespace fakp {

// Miniature KP-CNN classifier: per block grid_subsample -> radius_neighbors
// -> kpconv -> batch_norm -> leaky_relu, then global mean pool and a linear
// head. Every channel width is a multiple of d so the whole stack can sit
// inside a frame-averaging wrapper.
struct KPCNNMiniConfig {
  int num_classes = 6;
  std::vector<int> channels = {24, 48, 96};
  std::vector<double> radii = {0.8, 1.6, 3.2};
  std::vector<double> subsample_cells = {0.35, 0.7, 1.4};
  int kernel_points = 15;
  double sigma_ratio = 0.3;
  double leaky_slope = 0.1;
  double bn_eps = 1e-5;
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;
  KernelMethod kernel_method = KernelMethod::Repulsion;

  void validate() const;
};

// none  -> raw stack; otherwise the stack is evaluated through the frame
// averaging wrapper(s).
struct WrapperDescriptor {
  enum class Kind { None, Invariant, Equivariant, Composed } kind = Kind::None;
  Group group = Group::E;
  // Composed: outer T-invariance around (group, Equivariant).
  static WrapperDescriptor none() { return {}; }
  static WrapperDescriptor invariant(Group g) { return {Kind::Invariant, g}; }
  static WrapperDescriptor equivariant(Group g) { return {Kind::Equivariant, g}; }
  static WrapperDescriptor composed(Group rotation_group) {
    return {Kind::Composed, rotation_group};
  }
};

struct KPConvBlock {
  KPConvLayer layer;
  Tensor gamma, beta;
  BatchNormState bn_state;
};

struct TrainedModel {
  KPCNNMiniConfig config;
  WrapperDescriptor wrapper;
  std::vector<KPConvBlock> blocks;
  Tensor head_weight;  // c_last x num_classes
  Tensor head_bias;    // num_classes

  // Trainable tensors, in a fixed order (block weights/gamma/beta, head).
  std::vector<Tensor> parameters();
  std::size_t parameter_count();

  // Times the raw (unwrapped) stack ran; frame averaging multiplies this by
  // |F(X)| per call.
  std::size_t inner_forward_calls = 0;
};

TrainedModel build_model(const KPCNNMiniConfig& config, const WrapperDescriptor& wrapper);

// Class logits [num_classes] for one cloud. Training mode lets batch-norm
// consume batch statistics (each frame branch updates the shared running
// stats in frame order).
Tensor kpcnn_forward(Tape& tape, TrainedModel& model, const PointCloud& cloud, bool training);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
};

// SGD with momentum over seeded shuffled mini-batches; deterministic given
// config.seed. lr == 0 leaves parameters untouched (the optimizer step is
// skipped).
std::vector<EpochMetrics> train(TrainedModel& model, const std::vector<LabeledCloud>& dataset);

struct EvalResult {
  double overall_accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Overall accuracy of argmax predictions. rotate=true applies a fresh seeded
// random rotation (coordinates and features) per sample before inference.
EvalResult evaluate(TrainedModel& model, const std::vector<LabeledCloud>& dataset, bool rotate,
                    std::uint64_t seed);

// Accuracy of an arbitrary label predictor; evaluate() delegates here.
EvalResult overall_accuracy(const std::vector<LabeledCloud>& dataset,
                            const std::function<int(const PointCloud&)>& predict);

// Versioned binary checkpoint: "FAKP" magic, u32 version, canonical
// key=value config text, then every state tensor (trainable parameters and
// batch-norm running buffers) as name / rank / dims / little-endian f64
// values. Round trips are bit exact.
void save_checkpoint(const std::string& path, TrainedModel& model);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace fakp
