#include "segloop/environment.hpp"

#include <utility>

#include <nlohmann/json.hpp>

namespace segloop {

namespace {

std::uint64_t fnv1a64_str(std::string_view s, std::uint64_t h) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

constexpr std::uint64_t kDigestSeed = 0xcbf29ce484222325ull;

} // namespace

Task Task::for_region(Scene scene, int region_id, std::string question) {
    BitMask gt = scene.region_mask(region_id);
    return Task{std::move(scene), region_id, std::move(question), std::move(gt)};
}

void EnvConfig::validate() const {
    if (max_turns < 1) throw ConfigError("max_turns must be at least 1");
    if (pool_cap < 1) throw ConfigError("pool_cap must be at least 1");
    if (thumb_size < 1) throw ConfigError("thumb_size must be at least 1");
    if (segmentor.noise_radius < 0) throw ConfigError("noise_radius must be non-negative");
}

std::string_view tool_event_kind_str(ToolEvent::Kind kind) {
    switch (kind) {
    case ToolEvent::Kind::zoom: return "zoom";
    case ToolEvent::Kind::rotate: return "rotate";
    case ToolEvent::Kind::segment: return "segment";
    case ToolEvent::Kind::invalid: return "invalid";
    case ToolEvent::Kind::budget_exhausted: return "budget_exhausted";
    case ToolEvent::Kind::answer_item: return "answer_item";
    }
    return "?";
}

FinalPrediction finalize_answer(const Scene& scene, const AnswerPayload& answer,
                                const SegmentorConfig& cfg, std::vector<ToolEvent>* events) {
    const ViewState full = ViewState::full(scene);
    FinalPrediction pred;
    for (const auto& item : answer.items) {
        BitMask mask(scene.width(), scene.height());
        std::string error;
        try {
            mask = item.box ? segment_box(scene, full, *item.box, cfg)
                            : segment_points(scene, full, item.points, cfg);
        } catch (const PromptError& e) {
            error = e.what();
        }
        if (events)
            events->push_back(ToolEvent{ToolEvent::Kind::answer_item, error, -1});
        pred.masks.push_back(std::move(mask));
    }
    pred.union_mask = union_masks(pred.masks, scene.width(), scene.height());
    pred.union_box = union_bbox(pred.masks);
    return pred;
}

Thumbnail render_overlay(const Scene& scene, const BitMask& mask, int thumb_size) {
    if (mask.width() != scene.width() || mask.height() != scene.height())
        throw DimensionError("overlay mask dims disagree with scene");
    Thumbnail t;
    t.width = thumb_size;
    t.height = thumb_size;
    t.cells.resize(static_cast<std::size_t>(thumb_size) * thumb_size);
    for (int y = 0; y < thumb_size; ++y) {
        const int sy = static_cast<int>(static_cast<std::int64_t>(y) * scene.height() / thumb_size);
        for (int x = 0; x < thumb_size; ++x) {
            const int sx =
                static_cast<int>(static_cast<std::int64_t>(x) * scene.width() / thumb_size);
            std::uint8_t v;
            if (mask.get(sx, sy)) {
                v = 6;
            } else {
                const int label = scene.label_at(sx, sy);
                v = label == 0 ? 0 : static_cast<std::uint8_t>(1 + (label - 1) % 5);
            }
            t.cells[static_cast<std::size_t>(y) * thumb_size + x] = v;
        }
    }
    return t;
}

// ============================================================================
// Episode
// ============================================================================

Episode::Episode(Task task, EnvConfig config)
    : task_(std::move(task)), config_(std::move(config)) {
    config_.validate();
    if (task_.target_region < 1 || task_.target_region > task_.scene.region_count())
        throw ConfigError("task target region out of range");
    if (!task_.gt_mask.same_dims(task_.scene.region_mask(task_.target_region)) ||
        !(task_.gt_mask == task_.scene.region_mask(task_.target_region)))
        throw ConfigError("task gt mask disagrees with its target region");
    view_ = ViewState::full(task_.scene);
    budget_remaining_ = config_.max_turns;
    digest_state_ = kDigestSeed;
    refresh_observation();
}

const Observation& Episode::observation() const {
    if (terminal_) throw EpisodeClosedError("episode is terminal");
    return obs_;
}

const FinalPrediction& Episode::final_prediction() const {
    if (!terminal_ || !traj_.final_prediction)
        throw EpisodeClosedError("episode has no final prediction yet");
    return *traj_.final_prediction;
}

const StepRecord& Episode::step_raw(std::string_view raw) {
    if (terminal_) throw EpisodeClosedError("cannot step a terminal episode");
    auto [turn, verdict] = parse_turn(raw);
    return apply(std::string(raw), std::move(turn), std::move(verdict));
}

const StepRecord& Episode::step(const AgentTurn& turn) {
    if (terminal_) throw EpisodeClosedError("cannot step a terminal episode");
    return apply(serialize_turn(turn), turn, FormatVerdict::accept());
}

const StepRecord& Episode::apply(std::string raw, std::optional<AgentTurn> turn,
                                 FormatVerdict verdict) {
    StepRecord rec;
    rec.t = static_cast<int>(traj_.steps.size()) + 1;
    rec.obs_digest = obs_.context_digest;
    rec.raw = std::move(raw);
    rec.turn = std::move(turn);
    rec.verdict = std::move(verdict);

    if (rec.turn && rec.turn->is_answer()) {
        FinalPrediction pred =
            finalize_answer(task_.scene, *rec.turn->answer, config_.segmentor, &rec.events);
        traj_.steps.push_back(std::move(rec));
        terminate_with(std::move(pred));
    } else if (budget_remaining_ == 0) {
        // Budget exhausted and no answer given: reject any calls and
        // close the episode with an empty prediction.
        if (rec.turn)
            for (std::size_t i = 0; i < rec.turn->tool_calls.size(); ++i)
                rec.events.push_back(ToolEvent{ToolEvent::Kind::budget_exhausted, "", -1});
        traj_.steps.push_back(std::move(rec));
        FinalPrediction empty;
        empty.union_mask = BitMask(task_.scene.width(), task_.scene.height());
        empty.union_box = BBox::empty();
        terminate_with(std::move(empty));
    } else {
        if (rec.turn) execute_calls(*rec.turn, rec);
        --budget_remaining_;
        digest_state_ = fnv1a64_str(rec.raw, digest_state_);
        digest_state_ = fnv1a64_str("\x1e", digest_state_);
        traj_.steps.push_back(std::move(rec));
        refresh_observation();
    }
    return traj_.steps.back();
}

void Episode::execute_calls(const AgentTurn& turn, StepRecord& rec) {
    for (const auto& call : turn.tool_calls) {
        FormatVerdict v =
            validate_args(call, task_.scene.width(), task_.scene.height(), view_);
        if (!v.ok) {
            rec.events.push_back(ToolEvent{ToolEvent::Kind::invalid, v.detail, -1});
            continue;
        }
        switch (call.name) {
        case ToolName::zoom_in: {
            view_.crop = map_box_to_scene(view_, std::get<ZoomArgs>(call.args).box);
            rec.events.push_back(ToolEvent{ToolEvent::Kind::zoom, "", -1});
            break;
        }
        case ToolName::rotate: {
            const int angle = std::get<RotateArgs>(call.args).angle;
            view_.rotation = compose_rotation(view_.rotation, rotation_from_degrees(angle));
            rec.events.push_back(ToolEvent{ToolEvent::Kind::rotate, "", -1});
            break;
        }
        case ToolName::segment_points: {
            const auto& pts = std::get<SegmentPointsArgs>(call.args).points;
            std::vector<PointPrompt> scene_pts;
            scene_pts.reserve(pts.size());
            for (const auto& p : pts) {
                const Pixel s = map_point_to_scene(view_, Pixel{p.x, p.y});
                scene_pts.push_back(PointPrompt{s.x, s.y, p.polarity});
            }
            try {
                BitMask mask = segment_points(task_.scene, ViewState::full(task_.scene),
                                              scene_pts, config_.segmentor);
                const int idx = static_cast<int>(traj_.candidates.size());
                pool_.push_back(
                    PoolEntry{idx, render_overlay(task_.scene, mask, config_.thumb_size)});
                traj_.candidates.push_back(Candidate{std::move(mask), AnswerItem{scene_pts, {}}});
                rec.candidates_added.push_back(idx);
                rec.events.push_back(ToolEvent{ToolEvent::Kind::segment, "", idx});
            } catch (const PromptError& e) {
                rec.events.push_back(ToolEvent{ToolEvent::Kind::invalid, e.what(), -1});
            }
            break;
        }
        case ToolName::segment_box: {
            try {
                const BBox view_box = std::get<SegmentBoxArgs>(call.args).box;
                const BBox scene_box = map_box_to_scene(view_, view_box);
                BitMask mask = segment_box(task_.scene, view_, view_box, config_.segmentor);
                const int idx = static_cast<int>(traj_.candidates.size());
                pool_.push_back(
                    PoolEntry{idx, render_overlay(task_.scene, mask, config_.thumb_size)});
                traj_.candidates.push_back(
                    Candidate{std::move(mask), AnswerItem{{}, scene_box}});
                rec.candidates_added.push_back(idx);
                rec.events.push_back(ToolEvent{ToolEvent::Kind::segment, "", idx});
            } catch (const PromptError& e) {
                rec.events.push_back(ToolEvent{ToolEvent::Kind::invalid, e.what(), -1});
            }
            break;
        }
        }
    }
    while (static_cast<int>(pool_.size()) > config_.pool_cap) pool_.erase(pool_.begin());
}

void Episode::terminate_with(FinalPrediction prediction) {
    traj_.final_prediction = std::move(prediction);
    terminal_ = true;
}

void Episode::refresh_observation() {
    obs_.question = task_.question;
    obs_.scene_width = task_.scene.width();
    obs_.scene_height = task_.scene.height();
    obs_.view = view_;
    obs_.history_pool = pool_;
    obs_.turn_index = static_cast<int>(traj_.steps.size());
    obs_.budget_remaining = budget_remaining_;
    obs_.context_digest = hex64(digest_state_);
}

Trajectory replay_episode(const Task& task, const EnvConfig& config,
                          std::span<const std::string> raw_turns) {
    Episode ep(task, config);
    for (const auto& raw : raw_turns) {
        ep.step_raw(raw);
        if (ep.terminal()) break;
    }
    return ep.trajectory();
}

std::vector<std::string> trajectory_log_lines(const Trajectory& traj, const BitMask& gt) {
    std::vector<std::string> lines;
    lines.reserve(traj.steps.size() + 1);
    for (const auto& step : traj.steps) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : step.events) {
            nlohmann::json e{{"kind", std::string(tool_event_kind_str(ev.kind))}};
            if (!ev.detail.empty()) e["detail"] = ev.detail;
            if (ev.candidate_index >= 0) e["cand"] = ev.candidate_index;
            events.push_back(std::move(e));
        }
        nlohmann::json cands = nlohmann::json::array();
        for (int idx : step.candidates_added)
            cands.push_back(rle_encode(traj.candidates[static_cast<std::size_t>(idx)].mask));
        lines.push_back(nlohmann::json{{"t", step.t},
                                       {"turn", step.raw},
                                       {"events", events},
                                       {"candidates", cands}}
                            .dump());
    }
    nlohmann::json masks = nlohmann::json::array();
    double final_iou = 0.0;
    if (traj.final_prediction) {
        for (const auto& m : traj.final_prediction->masks) masks.push_back(rle_encode(m));
        final_iou = iou(traj.final_prediction->union_mask, gt);
    }
    lines.push_back(nlohmann::json{{"final", {{"masks", masks}, {"iou", final_iou}}}}.dump());
    return lines;
}

} // namespace segloop
