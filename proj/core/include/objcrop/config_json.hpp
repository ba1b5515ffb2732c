#pragma once

#include <nlohmann/json.hpp>

#include "objcrop/cropper.hpp"
#include "objcrop/evalkit.hpp"
#include "objcrop/objectness.hpp"
#include "objcrop/ssl.hpp"
#include "objcrop/synthgen.hpp"

namespace objcrop {

/// JSON (de)serialization for every config section. Parsers are strict:
/// unknown keys raise ConfigError, absent keys keep their defaults, and the
/// serializers materialize every field so echoed configs are complete.

nlohmann::json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json proposal_config_to_json(const ProposalConfig& c);
ProposalConfig proposal_config_from_json(const nlohmann::json& j);

nlohmann::json bing_train_config_to_json(const BingTrainConfig& c);
BingTrainConfig bing_train_config_from_json(const nlohmann::json& j);

nlohmann::json crop_config_to_json(const CropConfig& c);
CropConfig crop_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json probe_config_to_json(const ProbeConfig& c);
ProbeConfig probe_config_from_json(const nlohmann::json& j);

nlohmann::json sweep_spec_to_json(const SweepSpec& s);
SweepSpec sweep_spec_from_json(const nlohmann::json& j);

}  // namespace objcrop
