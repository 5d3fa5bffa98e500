#include "segloop/config.hpp"

#include <cstdlib>
#include <fstream>

namespace segloop {

void HarnessConfig::validate() const {
    env.validate();
    weights.validate();
    filter.validate();
    if (grpo.group_size < 1) throw ConfigError("grpo group_size must be at least 1");
    if (grpo.max_groups < 1) throw ConfigError("grpo iterations must be at least 1");
    if (!(grpo.eps_clip > 0.0 && grpo.eps_clip < 1.0))
        throw ConfigError("grpo eps_clip must be in (0, 1)");
    if (!(grpo.delta > 0.0)) throw ConfigError("grpo delta must be positive");
    if (grpo.step_size < 0.0) throw ConfigError("grpo step_size must be non-negative");
    if (scenes.region_count < 1) throw ConfigError("scene region count must be at least 1");
    if (scenes.width < 16 || scenes.height < 16)
        throw ConfigError("scene size must be at least 16x16");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

nlohmann::json HarnessConfig::to_json() const {
    return nlohmann::json{
        {"env",
         {{"max_turns", env.max_turns},
          {"pool_cap", env.pool_cap},
          {"thumb_size", env.thumb_size},
          {"noise_radius", env.segmentor.noise_radius},
          {"noise_seed", env.segmentor.noise_seed}}},
        {"weights", weights.to_json()},
        {"grpo",
         {{"group_size", grpo.group_size},
          {"iterations", grpo.max_groups},
          {"step_size", grpo.step_size},
          {"eps_clip", grpo.eps_clip},
          {"delta", grpo.delta},
          {"stop_when_reached", grpo.stop_when_reached}}},
        {"filter",
         {{"keep_iou", filter.keep_iou},
          {"max_turns", filter.max_turns},
          {"rescue_iou", filter.rescue_iou}}},
        {"scenes",
         {{"regions", scenes.region_count}, {"width", scenes.width}, {"height", scenes.height}}},
        {"seed", seed},
        {"jobs", jobs},
    };
}

namespace {

void expect_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                 const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

} // namespace

HarnessConfig HarnessConfig::from_json(const nlohmann::json& j) {
    HarnessConfig cfg;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    expect_keys(j, {"env", "weights", "grpo", "filter", "scenes", "seed", "jobs"}, "config");

    if (j.contains("env")) {
        const auto& e = j.at("env");
        expect_keys(e, {"max_turns", "pool_cap", "thumb_size", "noise_radius", "noise_seed"},
                    "env");
        read_field(e, "max_turns", cfg.env.max_turns);
        read_field(e, "pool_cap", cfg.env.pool_cap);
        read_field(e, "thumb_size", cfg.env.thumb_size);
        read_field(e, "noise_radius", cfg.env.segmentor.noise_radius);
        read_field(e, "noise_seed", cfg.env.segmentor.noise_seed);
    }
    if (j.contains("weights")) cfg.weights = RewardWeights::from_json(j.at("weights"));
    if (j.contains("grpo")) {
        const auto& g = j.at("grpo");
        expect_keys(g,
                    {"group_size", "iterations", "step_size", "eps_clip", "delta",
                     "stop_when_reached"},
                    "grpo");
        read_field(g, "group_size", cfg.grpo.group_size);
        read_field(g, "iterations", cfg.grpo.max_groups);
        read_field(g, "step_size", cfg.grpo.step_size);
        read_field(g, "eps_clip", cfg.grpo.eps_clip);
        read_field(g, "delta", cfg.grpo.delta);
        read_field(g, "stop_when_reached", cfg.grpo.stop_when_reached);
    }
    if (j.contains("filter")) {
        const auto& f = j.at("filter");
        expect_keys(f, {"keep_iou", "max_turns", "rescue_iou"}, "filter");
        read_field(f, "keep_iou", cfg.filter.keep_iou);
        read_field(f, "max_turns", cfg.filter.max_turns);
        read_field(f, "rescue_iou", cfg.filter.rescue_iou);
    }
    if (j.contains("scenes")) {
        const auto& s = j.at("scenes");
        expect_keys(s, {"regions", "width", "height"}, "scenes");
        read_field(s, "regions", cfg.scenes.region_count);
        read_field(s, "width", cfg.scenes.width);
        read_field(s, "height", cfg.scenes.height);
    }
    read_field(j, "seed", cfg.seed);
    read_field(j, "jobs", cfg.jobs);
    cfg.validate();
    return cfg;
}

HarnessConfig load_config(const std::optional<std::string>& path_flag) {
    std::string path;
    if (path_flag) {
        path = *path_flag;
    } else if (const char* env = std::getenv("SEGLOOP_CONFIG"); env && *env) {
        path = env;
    } else {
        return HarnessConfig{};
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return HarnessConfig::from_json(j);
}

} // namespace segloop
