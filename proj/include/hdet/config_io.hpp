#pragma once

// JSON forms of the configuration structs. Readers start from the defaults,
// override the keys present and reject unknown keys.

#include <json.hpp>

#include "hdet/data.hpp"
#include "hdet/detector.hpp"
#include "hdet/training.hpp"

namespace hdet {

using Json = nlohmann::json;

class ConfigKeyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void to_json(Json& j, const HybridLayerSpec& v);
void from_json(const Json& j, HybridLayerSpec& v);
void to_json(Json& j, const HybridBlockConfig& v);
void from_json(const Json& j, HybridBlockConfig& v);
void to_json(Json& j, const StemLayerSpec& v);
void from_json(const Json& j, StemLayerSpec& v);
void to_json(Json& j, const DetectorConfig& v);
void from_json(const Json& j, DetectorConfig& v);
void to_json(Json& j, const LossWeights& v);
void from_json(const Json& j, LossWeights& v);
void to_json(Json& j, const AdamHyper& v);
void from_json(const Json& j, AdamHyper& v);
void to_json(Json& j, const TrainConfig& v);
void from_json(const Json& j, TrainConfig& v);

namespace data {
void to_json(Json& j, const AugmentPolicy& v);
void from_json(const Json& j, AugmentPolicy& v);
void to_json(Json& j, const SceneSpec& v);
void from_json(const Json& j, SceneSpec& v);
}  // namespace data

}  // namespace hdet
