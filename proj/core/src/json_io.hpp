#pragma once

// JSON conversions shared by the checkpoint and configuration code.

#include <json.hpp>

#include "fpbetter/checkpoint.hpp"
#include "fpbetter/model.hpp"

namespace fpb {

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

nlohmann::json sampler_to_json(const SamplerSnapshot& s);
SamplerSnapshot sampler_from_json(const nlohmann::json& j);

}  // namespace fpb
