#include "segloop/policies.hpp"

#include <algorithm>
#include <cmath>

namespace segloop {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based decision stream: decision k of episode (seed, task) is
// the same no matter how many decisions other policy variants consume.
struct DecisionStream {
    std::uint64_t base;
    std::uint64_t counter = 0;

    DecisionStream(std::uint64_t seed, std::uint64_t task_index)
        : base(splitmix64(seed ^ splitmix64(task_index + 0x7f4a7c15ull))) {}

    std::uint64_t next_u64() { return splitmix64(base ^ splitmix64(++counter)); }
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    int next_below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }
};

std::string segment_points_turn(const std::string& think, std::span<const PointPrompt> pts) {
    AgentTurn turn;
    turn.think = think;
    turn.tool_calls.push_back(ToolCall{
        ToolName::segment_points, SegmentPointsArgs{{pts.begin(), pts.end()}}});
    return serialize_turn(turn);
}

std::string answer_points_turn(const std::string& think, std::span<const PointPrompt> pts) {
    AgentTurn turn;
    turn.think = think;
    AnswerPayload answer;
    answer.items.push_back(AnswerItem{{pts.begin(), pts.end()}, std::nullopt});
    turn.answer = std::move(answer);
    return serialize_turn(turn);
}

double candidate_iou(const PolicyContext& ctx, int index) {
    const auto& cands = ctx.trajectory->candidates;
    return iou(cands[static_cast<std::size_t>(index)].mask, ctx.task->gt_mask);
}

// ---------------------------------------------------------------------------

// Probes the target once, inspects the overlay, then commits the same
// point. With noise off the final mask is exact.
class OraclePolicy : public ScriptedPolicy {
public:
    std::string next_turn(const Observation& obs, const PolicyContext& ctx) override {
        const Pixel a = ctx.task->scene.region_anchor(ctx.task->target_region);
        const PointPrompt p{a.x, a.y, Polarity::positive};
        if (obs.turn_index == 0)
            return segment_points_turn("probe the target region", {&p, 1});
        return answer_points_turn("the overlay confirms the target", {&p, 1});
    }
};

// Probes the center of the current view; hit or miss.
class GreedyCentroidPolicy : public ScriptedPolicy {
public:
    std::string next_turn(const Observation& obs, const PolicyContext&) override {
        const Pixel center{obs.view.view_width() / 2, obs.view.view_height() / 2};
        const Pixel scene_p = map_point_to_scene(obs.view, center);
        const PointPrompt view_pt{center.x, center.y, Polarity::positive};
        const PointPrompt scene_pt{scene_p.x, scene_p.y, Polarity::positive};
        if (obs.turn_index == 0)
            return segment_points_turn("probe the view center", {&view_pt, 1});
        return answer_points_turn("commit the center region", {&scene_pt, 1});
    }
};

// Oracle with per-decision perturbation. Decisions, in stream order:
//   0: first probe point, 1: refine point, 2: the committed answer.
// The refining variant issues a second segmentation with an extra point
// (or a fresh point when the first probe missed) and answers with the
// prompts of its best candidate.
class NoisyOraclePolicy : public ScriptedPolicy {
public:
    NoisyOraclePolicy(double p, bool refine) : p_(p), refine_(refine) {}

    std::string next_turn(const Observation& obs, const PolicyContext& ctx) override {
        if (!stream_) stream_.emplace(ctx.seed, ctx.task_index);
        const Scene& scene = ctx.task->scene;

        if (obs.turn_index == 0) {
            first_ = maybe_perturb(scene.region_anchor(ctx.task->target_region), scene);
            const PointPrompt p{first_.x, first_.y, Polarity::positive};
            if (!refine_) return answer_points_turn("commit in one shot", {&p, 1});
            return segment_points_turn("first probe", {&p, 1});
        }

        if (refine_ && obs.turn_index == 1) {
            const Pixel b = maybe_perturb(scene.region_far_point(ctx.task->target_region), scene);
            refine_prompts_.clear();
            if (!ctx.trajectory->candidates.empty() && candidate_iou(ctx, 0) > 0.0)
                refine_prompts_.push_back(PointPrompt{first_.x, first_.y, Polarity::positive});
            refine_prompts_.push_back(PointPrompt{b.x, b.y, Polarity::positive});
            return segment_points_turn("refine with an extra click", refine_prompts_);
        }

        // Commit: re-issue the best candidate's prompts, unless this
        // decision is the perturbed one.
        const double perturb_draw = stream_->next_unit();
        if (perturb_draw < p_) {
            const PointPrompt p{stream_->next_below(scene.width()),
                                stream_->next_below(scene.height()), Polarity::positive};
            return answer_points_turn("commit", {&p, 1});
        }
        int best = 0;
        double best_iou = -1.0;
        for (std::size_t i = 0; i < ctx.trajectory->candidates.size(); ++i) {
            const double v = candidate_iou(ctx, static_cast<int>(i));
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(i);
            }
        }
        const auto& prompts = ctx.trajectory->candidates[static_cast<std::size_t>(best)].prompts;
        return answer_points_turn("commit the best candidate", prompts.points);
    }

private:
    Pixel maybe_perturb(Pixel p, const Scene& scene) {
        const double draw = stream_->next_unit();
        const int rx = stream_->next_below(scene.width());
        const int ry = stream_->next_below(scene.height());
        return draw < p_ ? Pixel{rx, ry} : p;
    }

    double p_;
    bool refine_;
    std::optional<DecisionStream> stream_;
    Pixel first_{0, 0};
    std::vector<PointPrompt> refine_prompts_;
};

// Uniformly random tool usage; answers with probability 1/4 per turn.
class RandomPolicy : public ScriptedPolicy {
public:
    std::string next_turn(const Observation& obs, const PolicyContext& ctx) override {
        if (!stream_) stream_.emplace(ctx.seed, ctx.task_index);
        const int vw = obs.view.view_width();
        const int vh = obs.view.view_height();
        const int choice = stream_->next_below(4);
        const Pixel pt{stream_->next_below(vw), stream_->next_below(vh)};

        AgentTurn turn;
        switch (choice) {
        case 0: {
            const Pixel scene_p = map_point_to_scene(obs.view, pt);
            AnswerPayload answer;
            answer.items.push_back(AnswerItem{
                {PointPrompt{scene_p.x, scene_p.y, Polarity::positive}}, std::nullopt});
            turn.answer = std::move(answer);
            break;
        }
        case 1: {
            const int x0 = stream_->next_below(std::max(1, vw - 1));
            const int y0 = stream_->next_below(std::max(1, vh - 1));
            const int x1 = x0 + 1 + stream_->next_below(vw - x0 - 1 > 0 ? vw - x0 - 1 : 1);
            const int y1 = y0 + 1 + stream_->next_below(vh - y0 - 1 > 0 ? vh - y0 - 1 : 1);
            turn.tool_calls.push_back(ToolCall{
                ToolName::zoom_in, ZoomArgs{BBox{x0, y0, std::min(x1, vw), std::min(y1, vh)}}});
            break;
        }
        case 2:
            turn.tool_calls.push_back(
                ToolCall{ToolName::rotate, RotateArgs{90 * (1 + stream_->next_below(3))}});
            break;
        default:
            turn.tool_calls.push_back(ToolCall{
                ToolName::segment_points,
                SegmentPointsArgs{{PointPrompt{pt.x, pt.y, Polarity::positive}}}});
            break;
        }
        return serialize_turn(turn);
    }

private:
    std::optional<DecisionStream> stream_;
};

// Never answers; exercises budget enforcement.
class BudgetOnlyPolicy : public ScriptedPolicy {
public:
    std::string next_turn(const Observation&, const PolicyContext&) override {
        AgentTurn turn;
        turn.think = "keep looking";
        turn.tool_calls.push_back(ToolCall{ToolName::rotate, RotateArgs{90}});
        return serialize_turn(turn);
    }
};

} // namespace

std::unique_ptr<ScriptedPolicy> make_scripted_policy(const std::string& name, double param) {
    if (name == "oracle") return std::make_unique<OraclePolicy>();
    if (name == "greedy-centroid") return std::make_unique<GreedyCentroidPolicy>();
    if (name == "noisy-oracle") return std::make_unique<NoisyOraclePolicy>(param, true);
    if (name == "noisy-oracle-single") return std::make_unique<NoisyOraclePolicy>(param, false);
    if (name == "random") return std::make_unique<RandomPolicy>();
    if (name == "budget-only") return std::make_unique<BudgetOnlyPolicy>();
    throw ConfigError("unknown scripted policy '" + name + "'");
}

bool is_scripted_policy(const std::string& name) {
    return name == "oracle" || name == "greedy-centroid" || name == "noisy-oracle" ||
           name == "noisy-oracle-single" || name == "random" || name == "budget-only";
}

Trajectory run_episode(const Task& task, const EnvConfig& config, ScriptedPolicy& policy,
                       std::uint64_t seed, std::uint64_t task_index) {
    Episode ep(task, config);
    PolicyContext ctx;
    ctx.task = &task;
    ctx.seed = seed;
    ctx.task_index = task_index;
    while (!ep.terminal()) {
        ctx.trajectory = &ep.trajectory();
        const std::string raw = policy.next_turn(ep.observation(), ctx);
        ep.step_raw(raw);
    }
    return ep.trajectory();
}

} // namespace segloop
