#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/config.hpp"
#include "segloop/environment.hpp"

namespace segloop {

struct PolicyBinding {
    enum class Kind { scripted, external_cmd, external_tcp };
    Kind kind = Kind::scripted;
    std::string name;     // scripted policy name
    double param = 0.0;   // scripted policy parameter
    std::string endpoint; // command line or host:port
    std::string spec;     // original binding string

    static PolicyBinding parse(const std::string& s);
};

/// Deterministic task derivation: the target region and per-episode seed
/// come from the run seed and the task index.
Task task_from_scene(Scene scene, std::uint64_t run_seed, std::uint64_t index);
std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t index);

/// Writes n scene files plus scenes_manifest.json; returns the manifest.
nlohmann::json cmd_gen_scenes(int n, const SceneSpec& spec, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

/// Runs one episode per scene file; writes a trajectory log and a reward
/// report per task plus run_manifest.json; returns the manifest.
nlohmann::json cmd_run(const PolicyBinding& binding,
                       const std::vector<std::filesystem::path>& scene_files,
                       const HarnessConfig& cfg, const std::filesystem::path& out_dir);

/// Replays a trajectory log against its scene and recomputes the reward
/// breakdown; the replay must reproduce the logged candidates bit-exactly.
nlohmann::json cmd_score(const std::filesystem::path& log_file,
                         const std::filesystem::path& scene_file, int target,
                         const HarnessConfig& cfg);

/// Filters every run entry, rescues where possible, and emits the SFT
/// dataset (sft.jsonl) plus filter_manifest.json; returns the manifest.
nlohmann::json cmd_filter(const std::filesystem::path& run_manifest, const HarnessConfig& cfg,
                          const std::filesystem::path& out_dir);

/// Trains the toy policy on the prompt-selection bandit; writes
/// train_log.jsonl; returns a summary.
nlohmann::json cmd_train_toy(const HarnessConfig& cfg, const std::filesystem::path& out_dir);

/// Dataset metrics over a finished run: mean per-task IoU and cumulative
/// IoU of the final predictions.
nlohmann::json cmd_eval(const std::filesystem::path& run_manifest, const HarnessConfig& cfg);

/// Raw turn texts of a trajectory log, in order.
std::vector<std::string> read_log_turns(const std::filesystem::path& log_file);

} // namespace segloop
