#pragma once

// Hybrid pre-block + single-stage grid detector.
//
// Layer stack (with_hybrid = true):
//
//   image 3 x S0 x S0
//     -> hybrid.{0,1,2}: conv(k x k, stride 1) -> batchnorm -> leaky ReLU
//     -> stem.{0..}:     conv(3 x 3, stride s, pad 1) -> batchnorm -> leaky ReLU
//     -> head:           conv(1 x 1) + bias
//   raw output N x (B*5 + classes) x S x S
//
// The plain detector is the same stack without the hybrid layers; its first
// stem conv reads the 3 image channels instead of the hybrid output.
//
// Raw channel layout per cell: for each box b, [tx, ty, tw, th, to] at
// channels 5b..5b+4, then one logit per class shared by the cell's boxes.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdet/autodiff.hpp"
#include "hdet/boxes.hpp"
#include "hdet/tensor.hpp"

namespace hdet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kMaxHybridChannels = 256;

struct HybridLayerSpec {
  std::size_t out_channels = 8;
  std::size_t kernel_size = 3;
  std::size_t padding = 1;

  friend bool operator==(const HybridLayerSpec&, const HybridLayerSpec&) = default;
};

struct HybridBlockConfig {
  std::array<HybridLayerSpec, 3> layers{{{8, 3, 1}, {16, 3, 1}, {16, 3, 1}}};
  double activation_slope = kDefaultLeakySlope;

  /// Odd kernels, 1..256 channels per layer, and at least kImageChannels output
  /// channels on the last layer.
  void validate() const;
  friend bool operator==(const HybridBlockConfig&, const HybridBlockConfig&) = default;
};

struct StemLayerSpec {
  std::size_t out_channels = 16;
  std::size_t stride = 2;

  friend bool operator==(const StemLayerSpec&, const StemLayerSpec&) = default;
};

struct DetectorConfig {
  std::size_t grid_size = 4;
  std::size_t boxes_per_cell = 1;
  std::size_t num_classes = 1;
  std::size_t input_size = 64;
  bool with_hybrid = false;
  std::vector<StemLayerSpec> stem{{16, 2}, {32, 2}, {64, 2}, {64, 2}, {64, 1}};
  double activation_slope = kDefaultLeakySlope;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  std::size_t output_channels() const noexcept { return boxes_per_cell * 5 + num_classes; }
  void validate() const;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

enum class LayerKind { conv_bn_act, head };

/// One resolved layer of the stack, with its input geometry.
struct LayerPlan {
  std::string name;  // parameter prefix, e.g. "hybrid.0" or "stem.2" or "head"
  LayerKind kind = LayerKind::conv_bn_act;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_size = 0;
  std::size_t out_size = 0;
  double slope = kDefaultLeakySlope;
};

/// Resolves the layer stack; throws ConfigError when it does not end at S x S.
std::vector<LayerPlan> plan_layers(const DetectorConfig& config,
                                   const std::optional<HybridBlockConfig>& hybrid);

class Model {
 public:
  Model(DetectorConfig config, std::optional<HybridBlockConfig> hybrid,
        std::map<std::string, Tensor> parameters, std::map<std::string, BatchNormState> norms);

  const DetectorConfig& config() const noexcept { return config_; }
  const std::optional<HybridBlockConfig>& hybrid_config() const noexcept { return hybrid_; }
  const std::vector<LayerPlan>& layers() const noexcept { return layers_; }

  const std::map<std::string, Tensor>& parameters() const noexcept { return parameters_; }
  std::map<std::string, Tensor>& parameters() noexcept { return parameters_; }
  const std::map<std::string, BatchNormState>& norms() const noexcept { return norms_; }
  std::map<std::string, BatchNormState>& norms() noexcept { return norms_; }

  std::size_t parameter_count() const noexcept;
  std::uint64_t flops() const noexcept;

  /// Train-mode forward on `tape`. Registers every parameter on the tape and
  /// updates batch-norm running statistics.
  Var forward_train(Tape& tape, const Tensor& batch);

  /// Inference forward; pure, safe to call concurrently.
  Tensor infer(const Tensor& batch) const;

 private:
  void check_batch(const Tensor& batch) const;

  DetectorConfig config_;
  std::optional<HybridBlockConfig> hybrid_;
  std::vector<LayerPlan> layers_;
  std::map<std::string, Tensor> parameters_;
  std::map<std::string, BatchNormState> norms_;
};

/// Deterministic initialization: He-uniform kernels (bound sqrt(6 / fan_in)),
/// gamma = 1, beta = 0, biases 0.
Model build_model(const DetectorConfig& config, const std::optional<HybridBlockConfig>& hybrid,
                  std::uint64_t seed);

/// Forward pass returning raw predictions. Train mode updates running statistics.
Tensor forward(Model& model, const Tensor& batch, Mode mode);
Tensor forward(const Model& model, const Tensor& batch);

/// Grid geometry of a raw prediction tensor.
struct GridLayout {
  std::size_t grid_size = 4;
  std::size_t boxes_per_cell = 1;
  std::size_t num_classes = 1;

  std::size_t channels() const noexcept { return boxes_per_cell * 5 + num_classes; }
  static GridLayout of(const DetectorConfig& c) noexcept {
    return {c.grid_size, c.boxes_per_cell, c.num_classes};
  }
};

struct DecodeOptions {
  double conf_threshold = 0.25;
  /// Class-wise greedy suppression; off by default.
  bool nms = false;
  double nms_iou = 0.5;
};

/// Decodes one image's raw predictions ((B*5+C) x S x S, or 1 x ... x S x S).
/// Output order: row i, column j, box b.
std::vector<Detection> decode_predictions(const Tensor& raw, const GridLayout& layout,
                                          const DecodeOptions& options);
std::vector<Detection> decode_predictions(const Tensor& raw, const GridLayout& layout,
                                          double conf_threshold);

/// Slices image `n` out of an N x C x S x S prediction batch.
Tensor image_slice(const Tensor& batch, std::size_t n);

struct LossWeights {
  double coord = 5.0;
  double noobj = 0.5;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Composite YOLOv1-style loss, averaged over the batch:
///
///   coord * sum_resp sum_{x,y,w,h} (sigmoid(t) - target)^2
///   + sum_resp BCE(to, 1) + noobj * sum_empty BCE(to, 0)
///   + sum_resp sum_c BCE(tc, onehot)
///
/// Each ground truth is owned by the cell containing its center; within a cell
/// truths fill the B box slots in label order and any surplus is ignored.
/// Coordinate targets are the in-cell offsets (cx*S - j, cy*S - i) and (w, h).
Var detection_loss(Var raw, std::span<const std::vector<GroundTruth>> targets,
                   const GridLayout& layout, const LossWeights& weights = {});

/// FLOPs of one forward pass for one image: per output element 2*Cin*kH*kW for
/// a conv (+1 with bias), 5 for batchnorm, 1 for the activation.
std::uint64_t count_flops(const Model& model);
std::uint64_t count_flops(const std::vector<LayerPlan>& layers);

/// Parameter names belonging to the hybrid block.
bool is_hybrid_parameter(const std::string& name);

}  // namespace hdet
