#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hdet/data.hpp"
#include "hdet/detector.hpp"
#include "hdet/metrics.hpp"
#include "hdet/tensor.hpp"

namespace hdet {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// First and second moments per parameter name; t counts completed steps.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Moments are created on first use. Throws ShapeError on any shape mismatch.
void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, const AdamHyper& hyper);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  AdamHyper adam;
  std::uint64_t seed = 0;
  double conf_threshold = 0.25;  // operating point used by evaluate()
  data::AugmentPolicy augment;
  LossWeights loss;
  bool clip_gradients = true;
  double clip_norm = 10.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  double train_seconds = 0.0;
  double test_ms_per_image = 0.0;  // filled by the caller after evaluate()
  std::uint64_t flops = 0;
  std::size_t skipped_batches = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Epoch loop: seeded shuffle, batches of batch_size (last partial batch
/// kept), per-sample augmentation, train-mode forward, loss, backward,
/// optional clipping, Adam. Bit-deterministic for a fixed seed.
TrainLog train(Model& model, std::span<const data::Sample> train_set, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

/// Stacks sample images into an N x 3 x size x size batch, resizing as needed.
Tensor stack_images(std::span<const data::Sample> samples, std::size_t size);

struct Evaluation {
  metrics::MetricsReport report;
  double ms_per_image = 0.0;
};

/// Inference on every image, decode with no confidence cut, mAP@50 with the
/// operating point at conf_threshold. Leaves the model untouched.
Evaluation evaluate(const Model& model, std::span<const data::Sample> test_set, double conf_threshold);

/// Scores precomputed detections against the test set's labels.
metrics::MetricsReport score_detections(std::span<const std::vector<Detection>> detections,
                                        std::span<const data::Sample> test_set, std::size_t num_classes,
                                        double conf_threshold);

}  // namespace hdet
