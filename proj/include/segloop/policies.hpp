#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "segloop/environment.hpp"

namespace segloop {

/// Per-episode context handed to scripted policies. Teachers are data
/// synthesizers, so they may peek at the task and the trajectory so far.
struct PolicyContext {
    const Task* task = nullptr;
    const Trajectory* trajectory = nullptr;
    std::uint64_t seed = 0;
    std::uint64_t task_index = 0;
};

class ScriptedPolicy {
public:
    virtual ~ScriptedPolicy() = default;
    virtual std::string next_turn(const Observation& obs, const PolicyContext& ctx) = 0;
};

/// Registered names: oracle, greedy-centroid, noisy-oracle,
/// noisy-oracle-single, random, budget-only.
/// `param` is the perturbation probability of the noisy teachers.
std::unique_ptr<ScriptedPolicy> make_scripted_policy(const std::string& name, double param = 0.0);

bool is_scripted_policy(const std::string& name);

/// Drives one fresh episode with a scripted policy; deterministic for a
/// fixed (task, config, seed, task_index).
Trajectory run_episode(const Task& task, const EnvConfig& config, ScriptedPolicy& policy,
                       std::uint64_t seed, std::uint64_t task_index);

} // namespace segloop
