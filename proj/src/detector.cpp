#include "hdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>

#include "hdet/kernels.hpp"
#include "hdet/metrics.hpp"
#include "hdet/rng.hpp"

namespace hdet {

namespace {

constexpr double kMinExtent = 1e-12;

std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string weight_name(const LayerPlan& l) {
  return l.kind == LayerKind::head ? l.name + ".weight" : l.name + ".conv.weight";
}

// Logistic loss of logit z against label y in {0, 1}, stable for large |z|.
double bce_with_logit(double z, double y) noexcept {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

void HybridBlockConfig::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const HybridLayerSpec& l = layers[i];
    const std::string where = "hybrid layer " + std::to_string(i) + ": ";
    if (l.out_channels == 0 || l.out_channels > kMaxHybridChannels)
      throw ConfigError(where + "out_channels must lie in [1, " +
                        std::to_string(kMaxHybridChannels) + "]");
    if (l.kernel_size == 0 || l.kernel_size % 2 == 0)
      throw ConfigError(where + "kernel_size must be a positive odd integer");
  }
  if (layers.back().out_channels < kImageChannels)
    throw ConfigError("hybrid block must emit at least " + std::to_string(kImageChannels) +
                      " channels");
  if (!(activation_slope > 0.0 && activation_slope < 1.0))
    throw ConfigError("hybrid activation slope must lie in (0, 1)");
}

void DetectorConfig::validate() const {
  if (grid_size == 0 || boxes_per_cell == 0 || num_classes == 0 || input_size == 0)
    throw ConfigError("grid_size, boxes_per_cell, num_classes and input_size must be positive");
  if (stem.empty()) throw ConfigError("detector stem needs at least one layer");
  for (const StemLayerSpec& s : stem)
    if (s.out_channels == 0 || s.stride == 0)
      throw ConfigError("stem layers need positive out_channels and stride");
  if (!(activation_slope > 0.0 && activation_slope < 1.0))
    throw ConfigError("activation slope must lie in (0, 1)");
  if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must lie in (0, 1)");
}

std::vector<LayerPlan> plan_layers(const DetectorConfig& config,
                                   const std::optional<HybridBlockConfig>& hybrid) {
  config.validate();
  if (config.with_hybrid != hybrid.has_value())
    throw ConfigError(config.with_hybrid ? "with_hybrid is set but no hybrid config was given"
                                         : "hybrid config given for a plain detector");
  std::vector<LayerPlan> plan;
  std::size_t channels = kImageChannels, size = config.input_size;
  auto push = [&](LayerPlan l) {
    l.in_channels = channels;
    l.in_size = size;
    if (size + 2 * l.padding < l.kernel_size)
      throw ConfigError(l.name + ": kernel larger than padded input " + std::to_string(size));
    l.out_size = kernels::conv_output_extent(size, l.kernel_size, l.stride, l.padding);
    channels = l.out_channels;
    size = l.out_size;
    plan.push_back(std::move(l));
  };

  if (hybrid) {
    hybrid->validate();
    for (std::size_t i = 0; i < hybrid->layers.size(); ++i) {
      const HybridLayerSpec& h = hybrid->layers[i];
      push(LayerPlan{"hybrid." + std::to_string(i), LayerKind::conv_bn_act, 0, h.out_channels,
                     h.kernel_size, 1, h.padding, 0, 0, hybrid->activation_slope});
    }
  }
  for (std::size_t i = 0; i < config.stem.size(); ++i) {
    const StemLayerSpec& s = config.stem[i];
    push(LayerPlan{"stem." + std::to_string(i), LayerKind::conv_bn_act, 0, s.out_channels, 3,
                   s.stride, 1, 0, 0, config.activation_slope});
  }
  if (size != config.grid_size)
    throw ConfigError("stem reduces " + std::to_string(config.input_size) + " x " +
                      std::to_string(config.input_size) + " input to " + std::to_string(size) +
                      " x " + std::to_string(size) + ", expected grid " +
                      std::to_string(config.grid_size) + " x " + std::to_string(config.grid_size));
  push(LayerPlan{"head", LayerKind::head, 0, config.output_channels(), 1, 1, 0, 0, 0, 0.0});
  return plan;
}

bool is_hybrid_parameter(const std::string& name) { return name.rfind("hybrid.", 0) == 0; }

Model::Model(DetectorConfig config, std::optional<HybridBlockConfig> hybrid,
             std::map<std::string, Tensor> parameters, std::map<std::string, BatchNormState> norms)
    : config_(std::move(config)),
      hybrid_(std::move(hybrid)),
      layers_(plan_layers(config_, hybrid_)),
      parameters_(std::move(parameters)),
      norms_(std::move(norms)) {
  std::size_t expected_params = 0;
  auto expect = [&](const std::string& name, const Shape& shape) {
    auto it = parameters_.find(name);
    if (it == parameters_.end()) throw ConfigError("model is missing parameter " + name);
    if (it->second.shape() != shape)
      throw ConfigError("parameter " + name + " has shape " + to_string(it->second.shape()) +
                        ", expected " + to_string(shape));
    ++expected_params;
  };
  std::size_t expected_norms = 0;
  for (const LayerPlan& l : layers_) {
    expect(weight_name(l), {l.out_channels, l.in_channels, l.kernel_size, l.kernel_size});
    if (l.kind == LayerKind::head) {
      expect("head.bias", {l.out_channels});
      continue;
    }
    expect(l.name + ".bn.gamma", {l.out_channels});
    expect(l.name + ".bn.beta", {l.out_channels});
    auto it = norms_.find(l.name + ".bn");
    if (it == norms_.end()) throw ConfigError("model is missing batchnorm state " + l.name + ".bn");
    it->second.validate(l.out_channels);
    ++expected_norms;
  }
  if (expected_params != parameters_.size() || expected_norms != norms_.size())
    throw ConfigError("model carries tensors that do not belong to its configuration");
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& [name, t] : parameters_) total += t.size();
  return total;
}

std::uint64_t Model::flops() const noexcept { return count_flops(layers_); }

void Model::check_batch(const Tensor& batch) const {
  const Shape expected_tail{kImageChannels, config_.input_size, config_.input_size};
  if (batch.rank() != 4 || !std::equal(expected_tail.begin(), expected_tail.end(), batch.shape().begin() + 1))
    throw ShapeError("model expects N x 3 x " + std::to_string(config_.input_size) + " x " +
                     std::to_string(config_.input_size) + " input, got " + to_string(batch.shape()));
}

Var Model::forward_train(Tape& tape, const Tensor& batch) {
  check_batch(batch);
  Var x = tape.constant(batch);
  for (const LayerPlan& l : layers_) {
    Var w = tape.parameter(weight_name(l), parameters_.at(weight_name(l)));
    const Conv2dOptions geom{l.stride, l.padding};
    if (l.kind == LayerKind::head) {
      Var b = tape.parameter("head.bias", parameters_.at("head.bias"));
      x = conv2d(x, w, b, geom);
      continue;
    }
    x = conv2d(x, w, std::nullopt, geom);
    Var gamma = tape.parameter(l.name + ".bn.gamma", parameters_.at(l.name + ".bn.gamma"));
    Var beta = tape.parameter(l.name + ".bn.beta", parameters_.at(l.name + ".bn.beta"));
    x = batchnorm(x, gamma, beta, norms_.at(l.name + ".bn"), Mode::train);
    x = leaky_relu(x, l.slope);
  }
  return x;
}

Tensor Model::infer(const Tensor& batch) const {
  check_batch(batch);
  Tape tape(false);
  Var x = tape.constant(batch);
  for (const LayerPlan& l : layers_) {
    Var w = tape.constant(parameters_.at(weight_name(l)));
    const Conv2dOptions geom{l.stride, l.padding};
    if (l.kind == LayerKind::head) {
      x = conv2d(x, w, tape.constant(parameters_.at("head.bias")), geom);
      continue;
    }
    x = conv2d(x, w, std::nullopt, geom);
    x = batchnorm(x, tape.constant(parameters_.at(l.name + ".bn.gamma")),
                  tape.constant(parameters_.at(l.name + ".bn.beta")), norms_.at(l.name + ".bn"));
    x = leaky_relu(x, l.slope);
  }
  return x.value();
}

Model build_model(const DetectorConfig& config, const std::optional<HybridBlockConfig>& hybrid,
                  std::uint64_t seed) {
  const std::vector<LayerPlan> plan = plan_layers(config, hybrid);
  std::map<std::string, Tensor> params;
  std::map<std::string, BatchNormState> norms;
  for (const LayerPlan& l : plan) {
    // One stream per parameter name, so shared layers of the hybrid and plain
    // variants start from the same weights whenever their shapes agree.
    const std::string name = weight_name(l);
    Rng rng(derive_seed(seed, fnv1a(name)));
    Tensor w({l.out_channels, l.in_channels, l.kernel_size, l.kernel_size});
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_channels * l.kernel_size * l.kernel_size));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    params.emplace(name, std::move(w));
    if (l.kind == LayerKind::head) {
      params.emplace("head.bias", Tensor({l.out_channels}, 0.0));
      continue;
    }
    params.emplace(l.name + ".bn.gamma", Tensor({l.out_channels}, 1.0));
    params.emplace(l.name + ".bn.beta", Tensor({l.out_channels}, 0.0));
    norms.emplace(l.name + ".bn", BatchNormState::fresh(l.out_channels, config.bn_eps, config.bn_momentum));
  }
  return Model(config, hybrid, std::move(params), std::move(norms));
}

Tensor forward(Model& model, const Tensor& batch, Mode mode) {
  if (mode == Mode::infer) return model.infer(batch);
  Tape tape(false);
  return model.forward_train(tape, batch).value();
}

Tensor forward(const Model& model, const Tensor& batch) { return model.infer(batch); }

Tensor image_slice(const Tensor& batch, std::size_t n) {
  if (batch.rank() != 4 || n >= batch.dim(0))
    throw ShapeError("cannot take image " + std::to_string(n) + " of " + to_string(batch.shape()));
  const std::size_t stride = batch.size() / batch.dim(0);
  std::vector<double> data(batch.data().begin() + static_cast<std::ptrdiff_t>(n * stride),
                           batch.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
  return Tensor({batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(data));
}

std::vector<Detection> decode_predictions(const Tensor& raw, const GridLayout& layout,
                                          const DecodeOptions& options) {
  const std::size_t S = layout.grid_size, B = layout.boxes_per_cell, C = layout.num_classes;
  const Shape expected{layout.channels(), S, S};
  const bool batched = raw.rank() == 4 && raw.dim(0) == 1;
  if (!(raw.shape() == expected ||
        (batched && std::equal(expected.begin(), expected.end(), raw.shape().begin() + 1))))
    throw ShapeError("decode expects " + to_string(expected) + " predictions, got " +
                     to_string(raw.shape()));
  auto at = [&](std::size_t ch, std::size_t i, std::size_t j) { return raw[(ch * S + i) * S + j]; };

  std::vector<Detection> out;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      std::size_t best_class = 0;
      for (std::size_t c = 1; c < C; ++c)
        if (at(B * 5 + c, i, j) > at(B * 5 + best_class, i, j)) best_class = c;
      const double class_prob = sigmoid(at(B * 5 + best_class, i, j));
      for (std::size_t b = 0; b < B; ++b) {
        const double confidence = sigmoid(at(b * 5 + 4, i, j)) * class_prob;
        if (!(confidence >= options.conf_threshold)) continue;
        BBox box{(static_cast<double>(j) + sigmoid(at(b * 5 + 0, i, j))) / static_cast<double>(S),
                 (static_cast<double>(i) + sigmoid(at(b * 5 + 1, i, j))) / static_cast<double>(S),
                 sigmoid(at(b * 5 + 2, i, j)), sigmoid(at(b * 5 + 3, i, j))};
        box = clip_unit(box);
        if (box.w < kMinExtent) {
          box.w = kMinExtent;
          box.cx = std::clamp(box.cx, 0.5 * kMinExtent, 1.0 - 0.5 * kMinExtent);
        }
        if (box.h < kMinExtent) {
          box.h = kMinExtent;
          box.cy = std::clamp(box.cy, 0.5 * kMinExtent, 1.0 - 0.5 * kMinExtent);
        }
        out.push_back(Detection{best_class, box, std::clamp(confidence, 0.0, 1.0)});
      }
    }
  }
  if (!options.nms) return out;

  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out[a].confidence > out[b].confidence; });
  std::vector<bool> keep(out.size(), true);
  for (std::size_t a = 0; a < order.size(); ++a) {
    if (!keep[order[a]]) continue;
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const Detection& hi = out[order[a]];
      const Detection& lo = out[order[b]];
      if (keep[order[b]] && lo.class_id == hi.class_id && metrics::iou(hi.bbox, lo.bbox) > options.nms_iou)
        keep[order[b]] = false;
    }
  }
  std::vector<Detection> kept;
  for (std::size_t k = 0; k < out.size(); ++k)
    if (keep[k]) kept.push_back(out[k]);
  return kept;
}

std::vector<Detection> decode_predictions(const Tensor& raw, const GridLayout& layout,
                                          double conf_threshold) {
  return decode_predictions(raw, layout, DecodeOptions{conf_threshold, false, 0.5});
}

namespace {

struct SlotTarget {
  double tx, ty, tw, th;
};

// Per image: slot (i, j, b) -> target, and per cell a multi-hot class vector.
struct ImageAssignment {
  std::vector<std::optional<SlotTarget>> slots;
  std::vector<std::vector<double>> cell_classes;  // empty when the cell owns nothing
};

ImageAssignment assign_targets(const std::vector<GroundTruth>& truths, const GridLayout& layout) {
  const std::size_t S = layout.grid_size, B = layout.boxes_per_cell;
  ImageAssignment a;
  a.slots.assign(S * S * B, std::nullopt);
  a.cell_classes.assign(S * S, {});
  for (const GroundTruth& g : truths) {
    const BBox& b = g.bbox;
    for (double v : {b.cx, b.cy, b.w, b.h})
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("ground truth box outside [0, 1]: (" + std::to_string(b.cx) +
                                    ", " + std::to_string(b.cy) + ", " + std::to_string(b.w) + ", " +
                                    std::to_string(b.h) + ")");
    if (g.class_id >= layout.num_classes)
      throw std::invalid_argument("ground truth class " + std::to_string(g.class_id) +
                                  " out of range for " + std::to_string(layout.num_classes) + " classes");
    const std::size_t i = responsible_cell(b.cy, S), j = responsible_cell(b.cx, S);
    const std::size_t cell = i * S + j;
    for (std::size_t k = 0; k < B; ++k) {
      auto& slot = a.slots[cell * B + k];
      if (slot) continue;
      slot = SlotTarget{b.cx * static_cast<double>(S) - static_cast<double>(j),
                        b.cy * static_cast<double>(S) - static_cast<double>(i), b.w, b.h};
      if (a.cell_classes[cell].empty()) a.cell_classes[cell].assign(layout.num_classes, 0.0);
      a.cell_classes[cell][g.class_id] = 1.0;
      break;
    }
  }
  return a;
}

}  // namespace

Var detection_loss(Var raw, std::span<const std::vector<GroundTruth>> targets,
                   const GridLayout& layout, const LossWeights& weights) {
  if (!raw.valid()) throw DetachedError("detection_loss on an empty Var");
  const Tensor& x = raw.value();
  const std::size_t S = layout.grid_size, B = layout.boxes_per_cell, C = layout.num_classes;
  if (x.rank() != 4 || x.dim(1) != layout.channels() || x.dim(2) != S || x.dim(3) != S)
    throw ShapeError("detection_loss expects N x " + std::to_string(layout.channels()) + " x " +
                     std::to_string(S) + " x " + std::to_string(S) + " predictions, got " +
                     to_string(x.shape()));
  const std::size_t N = x.dim(0);
  if (targets.size() != N)
    throw std::invalid_argument("detection_loss: " + std::to_string(targets.size()) +
                                " target lists for a batch of " + std::to_string(N));

  auto assignments = std::make_shared<std::vector<ImageAssignment>>();
  assignments->reserve(N);
  for (const auto& t : targets) assignments->push_back(assign_targets(t, layout));

  const std::size_t plane = S * S, image = layout.channels() * plane;
  auto idx = [&](std::size_t n, std::size_t ch, std::size_t cell) { return n * image + ch * plane + cell; };
  const double inv_n = 1.0 / static_cast<double>(N);

  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const ImageAssignment& a = (*assignments)[n];
    for (std::size_t cell = 0; cell < plane; ++cell) {
      for (std::size_t b = 0; b < B; ++b) {
        const auto& slot = a.slots[cell * B + b];
        const double to = x[idx(n, b * 5 + 4, cell)];
        if (!slot) {
          total += weights.noobj * bce_with_logit(to, 0.0);
          continue;
        }
        const double tgt[4] = {slot->tx, slot->ty, slot->tw, slot->th};
        for (std::size_t k = 0; k < 4; ++k) {
          const double d = sigmoid(x[idx(n, b * 5 + k, cell)]) - tgt[k];
          total += weights.coord * d * d;
        }
        total += bce_with_logit(to, 1.0);
      }
      if (a.cell_classes[cell].empty()) continue;
      for (std::size_t c = 0; c < C; ++c)
        total += bce_with_logit(x[idx(n, B * 5 + c, cell)], a.cell_classes[cell][c]);
    }
  }

  Tape& tape = *raw.tape();
  return tape.record(
      Tensor::scalar(total * inv_n), {raw},
      [raw, assignments, layout, weights, inv_n](Tape& t, const Tensor& g) {
        const Tensor& x = raw.value();
        const std::size_t S = layout.grid_size, B = layout.boxes_per_cell, C = layout.num_classes;
        const std::size_t plane = S * S, image = layout.channels() * plane;
        const double scale = g.item() * inv_n;
        Tensor dx(x.shape());
        for (std::size_t n = 0; n < x.dim(0); ++n) {
          const ImageAssignment& a = (*assignments)[n];
          for (std::size_t cell = 0; cell < plane; ++cell) {
            for (std::size_t b = 0; b < B; ++b) {
              const auto& slot = a.slots[cell * B + b];
              const std::size_t o = n * image + (b * 5 + 4) * plane + cell;
              if (!slot) {
                dx[o] = scale * weights.noobj * sigmoid(x[o]);
                continue;
              }
              const double tgt[4] = {slot->tx, slot->ty, slot->tw, slot->th};
              for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t p = n * image + (b * 5 + k) * plane + cell;
                const double s = sigmoid(x[p]);
                dx[p] = scale * weights.coord * 2.0 * (s - tgt[k]) * s * (1.0 - s);
              }
              dx[o] = scale * (sigmoid(x[o]) - 1.0);
            }
            if (a.cell_classes[cell].empty()) continue;
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t p = n * image + (B * 5 + c) * plane + cell;
              dx[p] = scale * (sigmoid(x[p]) - a.cell_classes[cell][c]);
            }
          }
        }
        t.accumulate(raw, std::move(dx));
      },
      "detection_loss");
}

std::uint64_t count_flops(const std::vector<LayerPlan>& layers) {
  std::uint64_t total = 0;
  for (const LayerPlan& l : layers) {
    const std::uint64_t elems = static_cast<std::uint64_t>(l.out_channels) * l.out_size * l.out_size;
    const std::uint64_t per_output = 2ULL * l.in_channels * l.kernel_size * l.kernel_size;
    if (l.kind == LayerKind::head) {
      total += elems * (per_output + 1);
    } else {
      total += elems * per_output + 5 * elems + elems;
    }
  }
  return total;
}

std::uint64_t count_flops(const Model& model) { return count_flops(model.layers()); }

}  // namespace hdet
