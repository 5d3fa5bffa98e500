#include "segloop/pipeline.hpp"

#include <algorithm>

namespace segloop {

std::vector<Trajectory> synthesize(const TeacherSpec& teacher, std::span<const Task> tasks,
                                   const EnvConfig& config, std::uint64_t seed) {
    std::vector<Trajectory> out(tasks.size());
    const std::int64_t n = static_cast<std::int64_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        auto policy = make_scripted_policy(teacher.name, teacher.param);
        out[static_cast<std::size_t>(i)] =
            run_episode(tasks[static_cast<std::size_t>(i)], config, *policy, seed,
                        static_cast<std::uint64_t>(i));
    }
    return out;
}

void FilterThresholds::validate() const {
    if (keep_iou <= 0.0 || keep_iou > 1.0) throw ConfigError("keep_iou must be in (0, 1]");
    if (rescue_iou <= 0.0 || rescue_iou > 1.0) throw ConfigError("rescue_iou must be in (0, 1]");
    if (max_turns < 1) throw ConfigError("filter max_turns must be at least 1");
}

std::string_view verdict_str(FilterDecision::Verdict v) {
    switch (v) {
    case FilterDecision::Verdict::keep: return "keep";
    case FilterDecision::Verdict::drop: return "drop";
    case FilterDecision::Verdict::rescue: return "rescue";
    }
    return "?";
}

FilterDecision filter_decision_core(double final_iou, int turns,
                                    std::span<const double> step_best_iou,
                                    const FilterThresholds& th) {
    FilterDecision d;
    d.final_iou = final_iou;
    d.turns = turns;
    for (double v : step_best_iou) d.best_intermediate_iou = std::max(d.best_intermediate_iou, v);

    if (final_iou >= th.keep_iou && turns <= th.max_turns) {
        d.verdict = FilterDecision::Verdict::keep;
        return d;
    }
    if (turns <= th.max_turns) {
        int best_step = -1;
        double best = 0.0;
        for (std::size_t s = 0; s < step_best_iou.size(); ++s) {
            const double v = step_best_iou[s];
            if (v < th.rescue_iou) continue;
            if (best_step < 0 || v > best) {
                best = v;
                best_step = static_cast<int>(s) + 1;
            }
        }
        if (best_step > 0) {
            d.verdict = FilterDecision::Verdict::rescue;
            d.rescue_step = best_step;
            return d;
        }
    }
    d.verdict = FilterDecision::Verdict::drop;
    d.drop_reason = final_iou < th.keep_iou ? "final_iou" : "turns";
    return d;
}

FilterDecision filter(const Trajectory& traj, const BitMask& gt, const FilterThresholds& th) {
    th.validate();
    const double final_iou =
        traj.final_prediction ? iou(traj.final_prediction->union_mask, gt) : 0.0;

    std::vector<double> step_best(traj.steps.size(), 0.0);
    std::vector<int> step_best_cand(traj.steps.size(), -1);
    for (std::size_t s = 0; s < traj.steps.size(); ++s) {
        for (int idx : traj.steps[s].candidates_added) {
            const double v = iou(traj.candidates[static_cast<std::size_t>(idx)].mask, gt);
            if (v > step_best[s]) {
                step_best[s] = v;
                step_best_cand[s] = idx;
            }
        }
    }

    FilterDecision d =
        filter_decision_core(final_iou, static_cast<int>(traj.steps.size()), step_best, th);
    if (d.verdict == FilterDecision::Verdict::rescue)
        d.rescue_candidate = step_best_cand[static_cast<std::size_t>(d.rescue_step) - 1];
    return d;
}

Trajectory rescue(const Trajectory& traj, const FilterDecision& decision, const Task& task,
                  const EnvConfig& config) {
    if (decision.verdict != FilterDecision::Verdict::rescue)
        throw RescueError("decision is not a rescue");
    if (decision.rescue_step < 1 ||
        decision.rescue_step > static_cast<int>(traj.steps.size()) ||
        decision.rescue_candidate < 0 ||
        decision.rescue_candidate >= static_cast<int>(traj.candidates.size()))
        throw RescueError("rescue step or candidate out of range");

    Episode ep(task, config);
    for (int s = 0; s < decision.rescue_step; ++s) {
        if (ep.terminal()) throw RescueError("trajectory terminates before the rescue step");
        ep.step_raw(traj.steps[static_cast<std::size_t>(s)].raw);
    }
    if (ep.terminal()) throw RescueError("rescue step is terminal");

    AgentTurn commit;
    commit.think = "commit the verified intermediate mask";
    AnswerPayload answer;
    answer.items.push_back(traj.candidates[static_cast<std::size_t>(decision.rescue_candidate)].prompts);
    commit.answer = std::move(answer);
    ep.step(commit);
    return ep.trajectory();
}

// ============================================================================
// SFT emission
// ============================================================================

std::string_view sft_kind_str(SftUnit::Kind kind) {
    switch (kind) {
    case SftUnit::Kind::think: return "think";
    case SftUnit::Kind::tool: return "tool";
    case SftUnit::Kind::obs: return "obs";
    case SftUnit::Kind::answer: return "answer";
    }
    return "?";
}

namespace {

SftUnit::Kind sft_kind_from_str(std::string_view s) {
    if (s == "think") return SftUnit::Kind::think;
    if (s == "tool") return SftUnit::Kind::tool;
    if (s == "obs") return SftUnit::Kind::obs;
    if (s == "answer") return SftUnit::Kind::answer;
    throw ConfigError("unknown sft unit kind '" + std::string(s) + "'");
}

void append_turn_units(const StepRecord& step, std::vector<SftUnit>& units) {
    if (!step.turn) {
        // Kept trajectories can still carry a malformed turn; its raw
        // text is policy-authored either way.
        units.push_back(SftUnit{SftUnit::Kind::tool, step.raw, 1});
        return;
    }
    const AgentTurn& turn = *step.turn;
    if (!turn.think.empty())
        units.push_back(
            SftUnit{SftUnit::Kind::think, "<think>" + turn.think + "</think>", 1});
    for (const auto& call : turn.tool_calls) {
        AgentTurn single;
        single.tool_calls.push_back(call);
        units.push_back(SftUnit{SftUnit::Kind::tool, serialize_turn(single), 1});
    }
    if (turn.answer) {
        units.push_back(SftUnit{SftUnit::Kind::answer,
                                "<answer>" + answer_to_json(*turn.answer).dump() + "</answer>",
                                1});
    }
}

} // namespace

SftExample emit_sft_example(const Trajectory& traj, const Task& task, const EnvConfig& config,
                            std::string id) {
    SftExample ex;
    ex.id = std::move(id);

    Episode ep(task, config);
    for (const auto& step : traj.steps) {
        append_turn_units(step, ex.units);
        ep.step_raw(step.raw);
        if (!ep.terminal())
            ex.units.push_back(SftUnit{SftUnit::Kind::obs, serialize_observation(ep.observation()), 0});
    }
    ex.final_iou =
        traj.final_prediction ? iou(traj.final_prediction->union_mask, task.gt_mask) : 0.0;
    return ex;
}

nlohmann::json sft_to_json(const SftExample& ex) {
    nlohmann::json units = nlohmann::json::array();
    for (const auto& u : ex.units)
        units.push_back({{"kind", std::string(sft_kind_str(u.kind))},
                         {"text", u.text},
                         {"sup", u.sup}});
    return nlohmann::json{{"id", ex.id}, {"units", units}, {"final_iou", ex.final_iou}};
}

SftExample sft_from_json(const nlohmann::json& j) {
    SftExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.final_iou = j.at("final_iou").get<double>();
    for (const auto& u : j.at("units"))
        ex.units.push_back(SftUnit{sft_kind_from_str(u.at("kind").get<std::string>()),
                                   u.at("text").get<std::string>(), u.at("sup").get<int>()});
    return ex;
}

} // namespace segloop
