#include "hdet/config_io.hpp"

#include <set>
#include <string>

namespace hdet {

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigKeyError(where_ + " must be a JSON object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items())
      if (!known_.count(item.key())) throw ConfigKeyError("unknown key \"" + item.key() + "\" in " + where_);
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw ConfigKeyError(where_ + "." + key + ": " + e.what());
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> known_;
};

}  // namespace

void to_json(Json& j, const HybridLayerSpec& v) {
  j = Json{{"out_channels", v.out_channels}, {"kernel_size", v.kernel_size}, {"padding", v.padding}};
}
void from_json(const Json& j, HybridLayerSpec& v) {
  Reader r(j, "hybrid layer");
  r.get("out_channels", v.out_channels);
  r.get("kernel_size", v.kernel_size);
  r.get("padding", v.padding);
}

void to_json(Json& j, const HybridBlockConfig& v) {
  j = Json{{"layers", v.layers}, {"activation_slope", v.activation_slope}};
}
void from_json(const Json& j, HybridBlockConfig& v) {
  Reader r(j, "hybrid");
  r.get("layers", v.layers);
  r.get("activation_slope", v.activation_slope);
}

void to_json(Json& j, const StemLayerSpec& v) {
  j = Json{{"out_channels", v.out_channels}, {"stride", v.stride}};
}
void from_json(const Json& j, StemLayerSpec& v) {
  Reader r(j, "stem layer");
  r.get("out_channels", v.out_channels);
  r.get("stride", v.stride);
}

void to_json(Json& j, const DetectorConfig& v) {
  j = Json{{"grid_size", v.grid_size},
           {"boxes_per_cell", v.boxes_per_cell},
           {"num_classes", v.num_classes},
           {"input_size", v.input_size},
           {"with_hybrid", v.with_hybrid},
           {"stem", v.stem},
           {"activation_slope", v.activation_slope},
           {"bn_eps", v.bn_eps},
           {"bn_momentum", v.bn_momentum}};
}
void from_json(const Json& j, DetectorConfig& v) {
  Reader r(j, "detector");
  r.get("grid_size", v.grid_size);
  r.get("boxes_per_cell", v.boxes_per_cell);
  r.get("num_classes", v.num_classes);
  r.get("input_size", v.input_size);
  r.get("with_hybrid", v.with_hybrid);
  r.get("stem", v.stem);
  r.get("activation_slope", v.activation_slope);
  r.get("bn_eps", v.bn_eps);
  r.get("bn_momentum", v.bn_momentum);
}

void to_json(Json& j, const LossWeights& v) { j = Json{{"coord", v.coord}, {"noobj", v.noobj}}; }
void from_json(const Json& j, LossWeights& v) {
  Reader r(j, "loss");
  r.get("coord", v.coord);
  r.get("noobj", v.noobj);
}

void to_json(Json& j, const AdamHyper& v) {
  j = Json{{"learning_rate", v.learning_rate}, {"beta1", v.beta1}, {"beta2", v.beta2}, {"eps", v.eps}};
}
void from_json(const Json& j, AdamHyper& v) {
  Reader r(j, "adam");
  r.get("learning_rate", v.learning_rate);
  r.get("beta1", v.beta1);
  r.get("beta2", v.beta2);
  r.get("eps", v.eps);
}

void to_json(Json& j, const TrainConfig& v) {
  j = Json{{"epochs", v.epochs},
           {"batch_size", v.batch_size},
           {"adam", v.adam},
           {"seed", v.seed},
           {"conf_threshold", v.conf_threshold},
           {"augment", v.augment},
           {"loss", v.loss},
           {"clip_gradients", v.clip_gradients},
           {"clip_norm", v.clip_norm}};
}
void from_json(const Json& j, TrainConfig& v) {
  Reader r(j, "train");
  r.get("epochs", v.epochs);
  r.get("batch_size", v.batch_size);
  r.get("adam", v.adam);
  r.get("seed", v.seed);
  r.get("conf_threshold", v.conf_threshold);
  r.get("augment", v.augment);
  r.get("loss", v.loss);
  r.get("clip_gradients", v.clip_gradients);
  r.get("clip_norm", v.clip_norm);
}

namespace data {

void to_json(Json& j, const AugmentPolicy& v) {
  j = Json{{"flip_prob", v.flip_prob},
           {"rotate_prob", v.rotate_prob},
           {"zoom_prob", v.zoom_prob},
           {"brightness_prob", v.brightness_prob},
           {"contrast_prob", v.contrast_prob},
           {"rotation_max_deg", v.rotation_max_deg},
           {"zoom_lo", v.zoom_lo},
           {"zoom_hi", v.zoom_hi},
           {"brightness_delta", v.brightness_delta},
           {"contrast_lo", v.contrast_lo},
           {"contrast_hi", v.contrast_hi},
           {"seed", v.seed}};
}
void from_json(const Json& j, AugmentPolicy& v) {
  Reader r(j, "augment");
  r.get("flip_prob", v.flip_prob);
  r.get("rotate_prob", v.rotate_prob);
  r.get("zoom_prob", v.zoom_prob);
  r.get("brightness_prob", v.brightness_prob);
  r.get("contrast_prob", v.contrast_prob);
  r.get("rotation_max_deg", v.rotation_max_deg);
  r.get("zoom_lo", v.zoom_lo);
  r.get("zoom_hi", v.zoom_hi);
  r.get("brightness_delta", v.brightness_delta);
  r.get("contrast_lo", v.contrast_lo);
  r.get("contrast_hi", v.contrast_hi);
  r.get("seed", v.seed);
}

void to_json(Json& j, const SceneSpec& v) {
  j = Json{{"canvas", v.canvas},         {"min_objects", v.min_objects}, {"max_objects", v.max_objects},
           {"min_radius", v.min_radius}, {"max_radius", v.max_radius},   {"noise", v.noise},
           {"triangles", v.triangles},   {"exclusive_grid", v.exclusive_grid}};
}
void from_json(const Json& j, SceneSpec& v) {
  Reader r(j, "scene");
  r.get("canvas", v.canvas);
  r.get("min_objects", v.min_objects);
  r.get("max_objects", v.max_objects);
  r.get("min_radius", v.min_radius);
  r.get("max_radius", v.max_radius);
  r.get("noise", v.noise);
  r.get("triangles", v.triangles);
  r.get("exclusive_grid", v.exclusive_grid);
}

}  // namespace data
}  // namespace hdet
