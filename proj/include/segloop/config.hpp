#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "segloop/environment.hpp"
#include "segloop/grpo.hpp"
#include "segloop/pipeline.hpp"
#include "segloop/reward.hpp"

namespace segloop {

/// Harness-wide settings. Every field has a working default; a config
/// file overrides fields, and CLI flags override the file.
struct HarnessConfig {
    EnvConfig env;
    RewardWeights weights;
    ToyTrainConfig grpo;
    FilterThresholds filter;
    SceneSpec scenes{3, 64, 64};
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static HarnessConfig from_json(const nlohmann::json& j);
};

/// Resolution order: explicit path flag, then $SEGLOOP_CONFIG, then
/// built-in defaults.
HarnessConfig load_config(const std::optional<std::string>& path_flag);

} // namespace segloop
