#include "hdet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "hdet/autodiff.hpp"
#include "hdet/kernels.hpp"
#include "hdet/rng.hpp"

namespace hdet {

void AdamHyper::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("adam betas must lie in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
}

void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, const AdamHyper& hyper) {
  hyper.validate();
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape())
      throw ShapeError("adam: parameter " + name + " has shape " + to_string(it->second.shape()) +
                       " but gradient has " + to_string(g.shape()));
    for (auto* moments : {&state.m, &state.v}) {
      auto [mit, fresh] = moments->try_emplace(name, g.shape(), 0.0);
      if (!fresh && mit->second.shape() != g.shape())
        throw ShapeError("adam: moment for " + name + " has shape " + to_string(mit->second.shape()));
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (const auto& [name, g] : grads) {
    auto p = params.at(name).data();
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gd[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.data()) x *= k;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0))
    throw std::invalid_argument("conf_threshold must lie in [0, 1]");
  if (clip_gradients && !(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  adam.validate();
  augment.validate();
}

Tensor stack_images(std::span<const data::Sample> samples, std::size_t size) {
  if (samples.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const std::size_t plane = 3 * size * size;
  Tensor batch({samples.size(), 3, size, size});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Tensor& img = samples[n].image;
    const bool same = img.rank() == 3 && img.dim(1) == size && img.dim(2) == size;
    const Tensor resized = same ? Tensor{} : data::preprocess(img, size);
    const Tensor& src = same ? img : resized;
    std::copy_n(src.data().begin(), plane, batch.data().begin() + static_cast<std::ptrdiff_t>(n * plane));
  }
  return batch;
}

TrainLog train(Model& model, std::span<const data::Sample> train_set, const TrainConfig& config,
               const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (config.batch_size > train_set.size())
    throw std::invalid_argument("batch_size " + std::to_string(config.batch_size) + " exceeds training set size " +
                                std::to_string(train_set.size()));

  const GridLayout layout = GridLayout::of(model.config());
  const std::size_t size = model.config().input_size;
  const std::uint64_t augment_base = derive_seed(config.seed, config.augment.seed ^ 0xA5A5A5A5ULL);
  const std::uint64_t shuffle_base = derive_seed(config.seed, 0x5EED5EEDULL);

  TrainLog log;
  log.flops = model.flops();
  AdamState adam;
  std::vector<std::size_t> order(train_set.size());
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(shuffle_base, epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    const std::uint64_t epoch_seed = derive_seed(augment_base, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<data::Sample> batch_samples(count);
      const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::size_t idx = order[first + static_cast<std::size_t>(k)];
        Rng rng(derive_seed(epoch_seed, idx));
        batch_samples[k] = data::augment(train_set[idx], config.augment, rng);
      }
      std::vector<std::vector<GroundTruth>> targets(count);
      for (std::size_t k = 0; k < count; ++k) targets[k] = batch_samples[k].labels;

      const auto saved_norms = model.norms();
      double loss_value = 0.0;
      std::map<std::string, Tensor> grads;
      try {
        Tape tape;
        Var raw = model.forward_train(tape, stack_images(batch_samples, size));
        Var loss = detection_loss(raw, targets, layout, config.loss);
        loss_value = loss.value().item();
        grads = tape.backward(loss);
      } catch (const kernels::DegenerateBatchError& e) {
        model.norms() = saved_norms;
        ++log.skipped_batches;
        spdlog::warn("epoch {}: skipping batch of {} sample(s): {}", epoch + 1, count, e.what());
        continue;
      }
      if (!std::isfinite(loss_value))
        throw std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
      if (config.clip_gradients) clip_global_norm(grads, config.clip_norm);
      adam_step(model.parameters(), grads, adam, config.adam);
      loss_sum += loss_value;
      ++batches;
    }
    const double mean = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    log.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  log.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

metrics::MetricsReport score_detections(std::span<const std::vector<Detection>> detections,
                                        std::span<const data::Sample> test_set, std::size_t num_classes,
                                        double conf_threshold) {
  if (detections.size() != test_set.size())
    throw std::invalid_argument("detections and test set differ in length");
  std::vector<std::vector<GroundTruth>> truths;
  truths.reserve(test_set.size());
  for (const auto& s : test_set) truths.push_back(s.labels);
  std::vector<std::size_t> classes(num_classes);
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  metrics::EvalOptions opts;
  opts.operating_threshold = conf_threshold;
  return metrics::map50(detections, truths, classes, opts);
}

Evaluation evaluate(const Model& model, std::span<const data::Sample> test_set, double conf_threshold) {
  if (test_set.empty()) throw std::invalid_argument("test set is empty");
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0))
    throw std::invalid_argument("conf_threshold must lie in [0, 1]");
  const GridLayout layout = GridLayout::of(model.config());
  const std::size_t size = model.config().input_size;

  std::vector<std::vector<Detection>> detections(test_set.size());
  double total_ms = 0.0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const Tensor input = stack_images(test_set.subspan(i, 1), size);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor raw = model.infer(input);
    detections[i] = decode_predictions(raw, layout, 0.0);
    total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  Evaluation out;
  out.report = score_detections(detections, test_set, model.config().num_classes, conf_threshold);
  out.ms_per_image = total_ms / static_cast<double>(test_set.size());
  return out;
}

}  // namespace hdet
