#include <doctest.h>

#include "segloop/environment.hpp"
#include "segloop/policies.hpp"
#include "testutil.hpp"

using namespace segloop;
using namespace testutil;

namespace {

Task make_task(int regions = 2, std::uint64_t seed = 5, int target = 1) {
    return Task::for_region(generate_scene(SceneSpec{regions, 32, 32}, seed), target, "q");
}

std::string segment_turn(int x, int y) {
    AgentTurn turn;
    turn.tool_calls.push_back(
        ToolCall{ToolName::segment_points, SegmentPointsArgs{{PointPrompt{x, y, Polarity::positive}}}});
    return serialize_turn(turn);
}

std::string answer_turn(int x, int y) {
    AgentTurn turn;
    AnswerPayload answer;
    answer.items.push_back(AnswerItem{{PointPrompt{x, y, Polarity::positive}}, std::nullopt});
    turn.answer = std::move(answer);
    return serialize_turn(turn);
}

} // namespace

TEST_CASE("reset yields a fresh observation with the full default budget") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const Observation& obs = ep.observation();
    CHECK(obs.budget_remaining == 8);
    CHECK(obs.turn_index == 0);
    CHECK(obs.history_pool.empty());
    CHECK(obs.view == ViewState::full(task.scene));

    Episode ep2(task, EnvConfig{});
    CHECK(ep2.observation().context_digest == obs.context_digest);
    CHECK(serialize_observation(ep2.observation()) == serialize_observation(obs));
}

TEST_CASE("invalid config is rejected") {
    CHECK_THROWS_AS(Episode(make_task(), EnvConfig{0, 6, 96, {}}), ConfigError);
    CHECK_THROWS_AS(Episode(make_task(), EnvConfig{8, 0, 96, {}}), ConfigError);
}

TEST_CASE("a segment turn grows the pool and spends budget") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const Pixel a = task.scene.region_anchor(1);
    ep.step_raw(segment_turn(a.x, a.y));
    const Observation& obs = ep.observation();
    CHECK(obs.budget_remaining == 7);
    CHECK(obs.turn_index == 1);
    REQUIRE(obs.history_pool.size() == 1);
    CHECK(obs.history_pool[0].candidate_index == 0);
    CHECK(ep.trajectory().candidates.size() == 1);
    CHECK(ep.trajectory().candidates[0].mask == task.gt_mask);
}

TEST_CASE("the history pool caps out FIFO") {
    const Task task = make_task();
    EnvConfig cfg;
    cfg.pool_cap = 3;
    cfg.max_turns = 10;
    Episode ep(task, cfg);
    const Pixel a = task.scene.region_anchor(1);
    for (int i = 0; i < 5; ++i) ep.step_raw(segment_turn(a.x, a.y));
    const auto& pool = ep.observation().history_pool;
    REQUIRE(pool.size() == 3);
    CHECK(pool[0].candidate_index == 2);
    CHECK(pool[1].candidate_index == 3);
    CHECK(pool[2].candidate_index == 4);
    CHECK(ep.trajectory().candidates.size() == 5); // store is append-only
}

TEST_CASE("budget exhaustion rejects tools and closes with an empty prediction") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const Pixel a = task.scene.region_anchor(1);
    for (int i = 0; i < 8; ++i) {
        ep.step_raw(segment_turn(a.x, a.y));
        CHECK(!ep.terminal());
    }
    CHECK(ep.observation().budget_remaining == 0);
    const StepRecord& rec = ep.step_raw(segment_turn(a.x, a.y));
    REQUIRE(rec.events.size() == 1);
    CHECK(rec.events[0].kind == ToolEvent::Kind::budget_exhausted);
    CHECK(ep.terminal());
    CHECK(ep.final_prediction().masks.empty());
    CHECK(ep.final_prediction().union_mask.none());
    CHECK(ep.trajectory().steps.size() == 9);
    CHECK_THROWS_AS(ep.step_raw(answer_turn(a.x, a.y)), EpisodeClosedError);
}

TEST_CASE("an answer is accepted even after the budget is gone") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    for (int i = 0; i < 8; ++i) ep.step_raw(segment_turn(0, 0));
    const Pixel a = task.scene.region_anchor(1);
    ep.step_raw(answer_turn(a.x, a.y));
    CHECK(ep.terminal());
    CHECK(iou(ep.final_prediction().union_mask, task.gt_mask) == 1.0);
}

TEST_CASE("answering an interior point reproduces the gt mask exactly") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const Pixel a = task.scene.region_anchor(task.target_region);
    ep.step_raw(answer_turn(a.x, a.y));
    REQUIRE(ep.terminal());
    const FinalPrediction& pred = ep.final_prediction();
    REQUIRE(pred.masks.size() == 1);
    CHECK(pred.masks[0] == task.gt_mask);
    CHECK(iou(pred.union_mask, task.gt_mask) == 1.0);
}

TEST_CASE("multi-item answers union their masks") {
    const Task task = make_task(2);
    Episode ep(task, EnvConfig{});
    const Pixel a = task.scene.region_anchor(1);
    const Pixel b = task.scene.region_anchor(2);
    AgentTurn turn;
    AnswerPayload answer;
    answer.items.push_back(AnswerItem{{PointPrompt{a.x, a.y, Polarity::positive}}, std::nullopt});
    answer.items.push_back(AnswerItem{{PointPrompt{b.x, b.y, Polarity::positive}}, std::nullopt});
    turn.answer = std::move(answer);
    ep.step_raw(serialize_turn(turn));

    const FinalPrediction& pred = ep.final_prediction();
    REQUIRE(pred.masks.size() == 2);
    const std::vector<BitMask> both{task.scene.region_mask(1), task.scene.region_mask(2)};
    CHECK(pred.union_mask == union_masks(both, 32, 32));
    CHECK(pred.union_box == union_bbox(both));
}

TEST_CASE("answer items that fail segmentation contribute empty masks") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    AgentTurn turn;
    AnswerPayload answer;
    // all-negative item: fails the positive-point precondition
    answer.items.push_back(AnswerItem{{PointPrompt{1, 1, Polarity::negative}}, std::nullopt});
    turn.answer = std::move(answer);
    const StepRecord& rec = ep.step_raw(serialize_turn(turn));
    REQUIRE(ep.terminal());
    CHECK(ep.final_prediction().masks.size() == 1);
    CHECK(ep.final_prediction().masks[0].none());
    REQUIRE(rec.events.size() == 1);
    CHECK(rec.events[0].kind == ToolEvent::Kind::answer_item);
    CHECK(!rec.events[0].detail.empty());
}

TEST_CASE("invalid calls are recorded without mutating state") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    AgentTurn turn;
    turn.tool_calls.push_back(ToolCall{ToolName::rotate, RotateArgs{45}});
    const StepRecord& rec = ep.step_raw(serialize_turn(turn));
    REQUIRE(rec.events.size() == 1);
    CHECK(rec.events[0].kind == ToolEvent::Kind::invalid);
    CHECK(ep.observation().view == ViewState::full(task.scene));
    CHECK(ep.observation().budget_remaining == 7);
    CHECK(ep.trajectory().candidates.empty());
}

TEST_CASE("unparsable turns consume budget and are recorded") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const StepRecord& rec = ep.step_raw("total garbage");
    CHECK(!rec.verdict.ok);
    CHECK(*rec.verdict.kind == ViolationKind::unparsable);
    CHECK(!ep.terminal());
    CHECK(ep.observation().budget_remaining == 7);
}

TEST_CASE("view operations update the view and nothing else") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    AgentTurn turn;
    turn.tool_calls.push_back(ToolCall{ToolName::zoom_in, ZoomArgs{BBox{4, 6, 20, 22}}});
    turn.tool_calls.push_back(ToolCall{ToolName::rotate, RotateArgs{90}});
    ep.step_raw(serialize_turn(turn));
    CHECK(ep.observation().view == ViewState{BBox{4, 6, 20, 22}, Rotation::deg90});
    CHECK(ep.trajectory().candidates.empty());
    CHECK(task.gt_mask == task.scene.region_mask(task.target_region));

    // zoom within the rotated view composes in scene space
    AgentTurn turn2;
    turn2.tool_calls.push_back(ToolCall{ToolName::zoom_in, ZoomArgs{BBox{0, 0, 4, 4}}});
    ep.step_raw(serialize_turn(turn2));
    const ViewState v = ep.observation().view;
    CHECK(v.rotation == Rotation::deg90);
    CHECK(v.crop.area() == 16);
    CHECK(v.crop.x0 >= 4);
    CHECK(v.crop.y0 >= 6);
}

TEST_CASE("a policy that never answers ends in exactly max_turns + 1 turns") {
    for (const int max_turns : {3, 8}) {
        EnvConfig cfg;
        cfg.max_turns = max_turns;
        const Task task = make_task();
        auto policy = make_scripted_policy("budget-only");
        const Trajectory traj = run_episode(task, cfg, *policy, 0, 0);
        CHECK(static_cast<int>(traj.steps.size()) == max_turns + 1);
        REQUIRE(traj.final_prediction.has_value());
        CHECK(traj.final_prediction->masks.empty());
        CHECK(traj.final_prediction->union_mask.none());
    }
}

TEST_CASE("render_overlay fixtures") {
    const Scene s = generate_scene(SceneSpec{2, 32, 32}, 3);

    SUBCASE("identity size is lossless") {
        const BitMask& m = s.region_mask(1);
        const Thumbnail t = render_overlay(s, m, 32);
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const int label = s.label_at(x, y);
                const std::uint8_t expect =
                    m.get(x, y) ? 6 : (label == 0 ? 0 : static_cast<std::uint8_t>(1 + (label - 1) % 5));
                CHECK(t.at(x, y) == expect);
            }
        }
    }
    SUBCASE("downscale of a solid mask is solid") {
        const Thumbnail t = render_overlay(s, BitMask::filled(32, 32), 16);
        for (std::uint8_t v : t.cells) CHECK(v == 6);
    }
    SUBCASE("checkerboard downscale matches the index-mapping oracle") {
        BitMask checker(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if ((x + y) % 2 == 0) checker.set(x, y);
        const int tw = 12;
        const Thumbnail t = render_overlay(s, checker, tw);
        for (int y = 0; y < tw; ++y) {
            for (int x = 0; x < tw; ++x) {
                const int sx = x * 32 / tw;
                const int sy = y * 32 / tw;
                const int label = s.label_at(sx, sy);
                const std::uint8_t expect =
                    checker.get(sx, sy)
                        ? 6
                        : (label == 0 ? 0 : static_cast<std::uint8_t>(1 + (label - 1) % 5));
                CHECK(t.at(x, y) == expect);
            }
        }
    }
}

TEST_CASE("replaying recorded turns reproduces the trajectory bit-exactly") {
    const Task task = make_task(3, 17);
    EnvConfig cfg;
    cfg.segmentor.noise_radius = 1;
    cfg.segmentor.noise_seed = 4;

    auto policy = make_scripted_policy("random");
    const Trajectory original = run_episode(task, cfg, *policy, 99, 0);

    std::vector<std::string> raws;
    for (const auto& step : original.steps) raws.push_back(step.raw);
    const Trajectory replayed = replay_episode(task, cfg, raws);

    REQUIRE(replayed.steps.size() == original.steps.size());
    for (std::size_t i = 0; i < original.steps.size(); ++i) {
        CHECK(replayed.steps[i].raw == original.steps[i].raw);
        CHECK(replayed.steps[i].obs_digest == original.steps[i].obs_digest);
        CHECK(replayed.steps[i].candidates_added == original.steps[i].candidates_added);
    }
    REQUIRE(replayed.candidates.size() == original.candidates.size());
    for (std::size_t i = 0; i < original.candidates.size(); ++i)
        CHECK(replayed.candidates[i].mask == original.candidates[i].mask);

    const auto lines_a = trajectory_log_lines(original, task.gt_mask);
    const auto lines_b = trajectory_log_lines(replayed, task.gt_mask);
    CHECK(lines_a == lines_b);
}

TEST_CASE("trajectory log lines carry steps then a final record") {
    const Task task = make_task();
    Episode ep(task, EnvConfig{});
    const Pixel a = task.scene.region_anchor(1);
    ep.step_raw(segment_turn(a.x, a.y));
    ep.step_raw(answer_turn(a.x, a.y));
    const auto lines = trajectory_log_lines(ep.trajectory(), task.gt_mask);
    REQUIRE(lines.size() == 3);
    const auto step0 = nlohmann::json::parse(lines[0]);
    CHECK(step0["t"] == 1);
    CHECK(step0["candidates"].size() == 1);
    const auto final_line = nlohmann::json::parse(lines[2]);
    CHECK(final_line["final"]["iou"] == 1.0);
    CHECK(rle_decode(final_line["final"]["masks"][0]) == task.gt_mask);
}
