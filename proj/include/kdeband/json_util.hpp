#pragma once

#include <json.hpp>

#include "kdeband/sampler.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

nlohmann::json configuration_to_json(const Configuration& config);

/// Value kinds are taken from the JSON types: string, integer, number.
Configuration configuration_from_json(const nlohmann::json& j);

/// Space-aware variant: an integer-looking value bound for a continuous
/// parameter parses as a double.
Configuration configuration_from_json(const nlohmann::json& j, const SearchSpace& space);

nlohmann::json sampler_params_to_json(const SamplerParams& params);
SamplerParams sampler_params_from_json(const nlohmann::json& j);

}  // namespace kdeband
