#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/environment.hpp"
#include "segloop/policies.hpp"

namespace segloop {

struct TeacherSpec {
    std::string name = "oracle"; // any registered scripted policy
    double param = 0.0;          // perturbation probability for noisy teachers
};

/// One trajectory per task, deterministic for a fixed seed.
/// Episodes are independent and run in parallel.
std::vector<Trajectory> synthesize(const TeacherSpec& teacher, std::span<const Task> tasks,
                                   const EnvConfig& config, std::uint64_t seed);

struct FilterThresholds {
    double keep_iou = 0.9;
    int max_turns = 8;
    double rescue_iou = 0.9;

    void validate() const;
};

struct FilterDecision {
    enum class Verdict { keep, drop, rescue };
    Verdict verdict = Verdict::drop;
    std::string drop_reason;     // "final_iou" or "turns"
    int rescue_step = -1;        // 1-based step whose candidate qualified
    int rescue_candidate = -1;   // index into the trajectory candidate store
    double final_iou = 0.0;
    double best_intermediate_iou = 0.0;
    int turns = 0;
};

std::string_view verdict_str(FilterDecision::Verdict v);

/// Pure rule core: keep when the final mask is good enough and the
/// trajectory is short enough; otherwise rescue the best qualifying
/// intermediate step; otherwise drop with the first violated rule.
FilterDecision filter_decision_core(double final_iou, int turns,
                                    std::span<const double> step_best_iou,
                                    const FilterThresholds& th);

FilterDecision filter(const Trajectory& traj, const BitMask& gt, const FilterThresholds& th);

/// Truncates after the rescue step and appends a synthesized answer
/// re-issuing that step's qualifying prompts; the result re-filters as
/// keep. Replays through a fresh episode, so it needs the task and config.
Trajectory rescue(const Trajectory& traj, const FilterDecision& decision, const Task& task,
                  const EnvConfig& config);

// ============================================================================
// SFT emission
// ============================================================================

struct SftUnit {
    enum class Kind { think, tool, obs, answer };
    Kind kind;
    std::string text;
    int sup = 0;
};

std::string_view sft_kind_str(SftUnit::Kind kind);

struct SftExample {
    std::string id;
    std::vector<SftUnit> units;
    double final_iou = 0.0;
};

/// Replays the trajectory to reconstruct the observation texts between
/// turns. Policy-authored units are supervised; observations are not.
SftExample emit_sft_example(const Trajectory& traj, const Task& task, const EnvConfig& config,
                            std::string id);

nlohmann::json sft_to_json(const SftExample& ex);
SftExample sft_from_json(const nlohmann::json& j);

} // namespace segloop
