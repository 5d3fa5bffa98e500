#include <doctest.h>

#include "segloop/reward.hpp"
#include "testutil.hpp"

using namespace segloop;
using namespace testutil;

TEST_CASE("point_novelty fixtures") {
    const RewardWeights w;

    SUBCASE("no gain, no bonus") {
        const std::vector<Pixel> pts{{0, 0}, {30, 30}};
        CHECK(point_novelty(pts, {}, 0.0, w) == 0.0);
        CHECK(point_novelty(pts, {}, w.eps_pt, w) == 0.0);
    }
    SUBCASE("two far-apart points on an empty history are both novel") {
        const std::vector<Pixel> pts{{0, 0}, {20, 0}};
        CHECK(point_novelty(pts, {}, 0.5, w) == doctest::Approx(2 * w.rho_pt).epsilon(1e-12));
    }
    SUBCASE("a repeated point is fully redundant") {
        const std::vector<Pixel> pts{{4, 4}};
        const std::vector<Pixel> hist{{4, 4}};
        CHECK(point_novelty(pts, hist, 0.5, w) == doctest::Approx(-w.beta_pt).epsilon(1e-12));
    }
    SUBCASE("partial redundancy scales linearly with distance") {
        const std::vector<Pixel> pts{{4, 0}};
        const std::vector<Pixel> hist{{0, 0}};
        // dist 4 with d_min 8: redundancy 0.5
        CHECK(point_novelty(pts, hist, 0.5, w) ==
              doctest::Approx(-w.beta_pt * 0.5).epsilon(1e-12));
    }
    SUBCASE("distance exactly d_min counts as novel") {
        const std::vector<Pixel> pts{{8, 0}};
        const std::vector<Pixel> hist{{0, 0}};
        CHECK(point_novelty(pts, hist, 0.5, w) == doctest::Approx(w.rho_pt).epsilon(1e-12));
    }
}

TEST_CASE("step_reward fixtures") {
    const RewardWeights w;
    const BitMask gt = block_mask(20, 20, 0, 0, 10, 10); // 100 px

    SUBCASE("large gains clip at 0.5") {
        ShapingState state;
        state.iou_prev = 0.2;
        state.iou_best = 0.2;
        const BitMask cand = block_mask(20, 20, 0, 0, 10, 9); // 90 px subset: iou 0.9
        TurnOutcome outcome;
        outcome.new_masks = {&cand};
        outcome.executed_calls = {CallKind::segmentation};
        outcome.new_positive_points = {{5, 5}};
        const auto [r, next] = step_reward(state, outcome, gt, w);
        // 1*clip(0.7)->0.5 + 0.5*(0.9-0.2) - 0.05*2.5 + 0.05
        CHECK(r == doctest::Approx(0.5 + 0.35 - 0.125 + 0.05).epsilon(1e-12));
        CHECK(next.iou_prev == doctest::Approx(0.9));
        CHECK(next.iou_best == doctest::Approx(0.9));
        CHECK(next.point_history.size() == 1);
    }
    SUBCASE("a turn with only an invalid call scores -lambda_inv") {
        TurnOutcome outcome;
        outcome.any_violation = true;
        const auto [r, next] = step_reward(ShapingState{}, outcome, gt, w);
        CHECK(r == -1.0);
        CHECK(next.iou_prev == 0.0);
    }
    SUBCASE("a lone zoom costs lambda_cost * kappa_geo") {
        TurnOutcome outcome;
        outcome.executed_calls = {CallKind::geometric};
        const auto [r, next] = step_reward(ShapingState{}, outcome, gt, w);
        CHECK(r == doctest::Approx(-0.05).epsilon(1e-12));
        CHECK(next.iou_prev == 0.0); // carried forward, no segmentation
    }
    SUBCASE("drops clip at clip_lo") {
        ShapingState state;
        state.iou_prev = 0.9;
        state.iou_best = 0.9;
        const BitMask cand(20, 20); // empty: iou 0
        TurnOutcome outcome;
        outcome.new_masks = {&cand};
        outcome.executed_calls = {CallKind::segmentation};
        const auto [r, next] = step_reward(state, outcome, gt, w);
        // clip(-0.9) -> -0.1, no best bonus, seg cost
        CHECK(r == doctest::Approx(-0.1 - 0.125).epsilon(1e-12));
        CHECK(next.iou_best == doctest::Approx(0.9));
    }
    SUBCASE("dimension mismatch raises") {
        const BitMask cand(10, 10);
        TurnOutcome outcome;
        outcome.new_masks = {&cand};
        CHECK_THROWS_AS(step_reward(ShapingState{}, outcome, gt, RewardWeights{}),
                        DimensionError);
    }
}

TEST_CASE("hungarian fixtures and brute-force equivalence") {
    SUBCASE("1x1") {
        const auto pairs = hungarian({{3.0}});
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == std::pair<int, int>{0, 0});
    }
    SUBCASE("diagonal wins") {
        const auto pairs = hungarian({{0.0, 9.0}, {9.0, 0.0}});
        REQUIRE(pairs.size() == 2);
        CHECK(assignment_cost({{0.0, 9.0}, {9.0, 0.0}}, pairs) == 0.0);
    }
    SUBCASE("random integer matrices up to 5x5 match exhaustive search") {
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<int> entry(0, 100);
        std::uniform_int_distribution<int> dim(1, 5);
        for (int it = 0; it < 100; ++it) {
            const int r = dim(rng);
            const int c = dim(rng);
            std::vector<std::vector<double>> cost(r, std::vector<double>(c));
            for (auto& row : cost)
                for (auto& v : row) v = entry(rng);
            const auto pairs = hungarian(cost);
            CHECK(pairs.size() == static_cast<std::size_t>(std::min(r, c)));
            CHECK(assignment_cost(cost, pairs) == brute_force_assignment_cost(cost));
        }
    }
    SUBCASE("rectangular 4x5 matches") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> entry(0.0, 1.0);
        for (int it = 0; it < 50; ++it) {
            std::vector<std::vector<double>> cost(4, std::vector<double>(5));
            for (auto& row : cost)
                for (auto& v : row) v = entry(rng);
            CHECK(assignment_cost(cost, hungarian(cost)) ==
                  doctest::Approx(brute_force_assignment_cost(cost)).epsilon(1e-12));
        }
    }
    SUBCASE("non-finite entries raise") {
        CHECK_THROWS_AS(hungarian({{std::numeric_limits<double>::infinity()}}), ShapeError);
    }
}

TEST_CASE("final_reward fixtures") {
    SUBCASE("a perfect single-component prediction scores 1.5") {
        const BitMask gt = block_mask(16, 16, 2, 2, 9, 9);
        FinalPrediction pred;
        pred.masks = {gt};
        pred.union_mask = gt;
        pred.union_box = tight_bbox(gt);
        FinalRewardDiag diag;
        CHECK(final_reward(pred, gt, Connectivity::four, &diag) == 1.5);
        CHECK(diag.mean_matched_iou == 1.0);
        CHECK(diag.iou_box == 1.0);
    }
    SUBCASE("an empty prediction scores 0") {
        const BitMask gt = block_mask(16, 16, 2, 2, 9, 9);
        FinalPrediction pred;
        CHECK(final_reward(pred, gt) == 0.0);
        pred.masks = {BitMask(16, 16)};
        CHECK(final_reward(pred, gt) == 0.0);
    }
    SUBCASE("matching recovers swapped prediction order") {
        BitMask gt(16, 16);
        const BitMask comp_a = block_mask(16, 16, 0, 0, 4, 4);
        const BitMask comp_b = block_mask(16, 16, 8, 8, 14, 13);
        kernels::serial::or_into(gt, comp_a);
        kernels::serial::or_into(gt, comp_b);
        FinalPrediction pred;
        pred.masks = {comp_b, comp_a}; // swapped
        CHECK(final_reward(pred, gt) == 1.5);
    }
    SUBCASE("empty gt raises") {
        FinalPrediction pred;
        CHECK_THROWS_AS(final_reward(pred, BitMask(8, 8)), GtEmptyError);
    }
    SUBCASE("unmatched gt components dilute the mean") {
        BitMask gt(16, 16);
        const BitMask comp_a = block_mask(16, 16, 0, 0, 4, 4);
        const BitMask comp_b = block_mask(16, 16, 8, 8, 12, 12);
        kernels::serial::or_into(gt, comp_a);
        kernels::serial::or_into(gt, comp_b);
        FinalPrediction pred;
        pred.masks = {comp_a};
        FinalRewardDiag diag;
        final_reward(pred, gt, Connectivity::four, &diag);
        CHECK(diag.mean_matched_iou == 0.5);
    }
    SUBCASE("invariant to permutations of prediction items") {
        std::mt19937_64 rng(13);
        for (int it = 0; it < 30; ++it) {
            BitMask gt(20, 20);
            std::vector<BitMask> blobs;
            for (int k = 0; k < 3; ++k) {
                const int x0 = static_cast<int>(rng() % 14);
                const int y0 = 7 * k;
                const BitMask blob = block_mask(20, 20, x0, y0, x0 + 3, y0 + 3);
                kernels::serial::or_into(gt, blob);
                blobs.push_back(blob);
            }
            FinalPrediction pred;
            pred.masks = blobs;
            const double base = final_reward(pred, gt);
            std::shuffle(pred.masks.begin(), pred.masks.end(), rng);
            CHECK(final_reward(pred, gt) == doctest::Approx(base).epsilon(1e-12));
        }
    }
}

TEST_CASE("format_reward fixtures") {
    const RewardWeights w;
    CHECK(format_reward(std::vector<bool>{true, true, true}, w) ==
          doctest::Approx(0.3).epsilon(1e-12));
    CHECK(format_reward(std::vector<bool>{false}, w) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(format_reward(std::vector<bool>{}, w) == 0.0);
    CHECK(format_reward(std::vector<bool>(12, true), w) == 1.0);  // clamped
    CHECK(format_reward(std::vector<bool>(5, false), w) == -1.0); // clamped
}

TEST_CASE("total_return composition") {
    const RewardWeights w;
    CHECK(total_return(1.5, 0.4, 0.3, w) == doctest::Approx(1.76).epsilon(1e-12));
    CHECK(total_return(0.0, 0.0, 0.0, w) == 0.0);

    RewardWeights doubled = w;
    doubled.beta = 2 * w.beta;
    const double base = total_return(1.0, 0.7, 0.2, w);
    const double more = total_return(1.0, 0.7, 0.2, doubled);
    CHECK(more - base == doctest::Approx(w.beta * 0.7).epsilon(1e-12));
}

TEST_CASE("weights serialize and validate") {
    const RewardWeights w;
    const RewardWeights back = RewardWeights::from_json(w.to_json());
    CHECK(back.to_json() == w.to_json());

    CHECK_THROWS_AS(RewardWeights::from_json(nlohmann::json{{"unknown", 1.0}}), ConfigError);
    nlohmann::json bad = w.to_json();
    bad["clip_lo"] = 0.2; // must be negative
    CHECK_THROWS_AS(RewardWeights::from_json(bad), ConfigError);
}

TEST_CASE("score_trajectory on a hand-built two-turn episode") {
    // gt: 10x10 block; turn 1 segments a 30 px subset (iou 0.3) with one
    // novel point; turn 2 answers. By the shaping formula:
    //   r_1 = clip(0.3) + 0.5*0.3 - 0.05*2.5 + 0.05 = 0.375
    //   R_process = 0.375, R_format = 2 * 0.1 = 0.2
    const BitMask gt = block_mask(32, 32, 0, 0, 10, 10);

    Trajectory traj;
    traj.candidates.push_back(
        Candidate{block_mask(32, 32, 0, 0, 10, 3),
                  AnswerItem{{PointPrompt{5, 5, Polarity::positive}}, std::nullopt}});

    StepRecord s1;
    s1.t = 1;
    s1.verdict = FormatVerdict::accept();
    s1.events = {ToolEvent{ToolEvent::Kind::segment, "", 0}};
    s1.candidates_added = {0};
    traj.steps.push_back(s1);

    StepRecord s2;
    s2.t = 2;
    s2.verdict = FormatVerdict::accept();
    traj.steps.push_back(s2);

    FinalPrediction pred;
    pred.masks = {gt};
    pred.union_mask = gt;
    pred.union_box = tight_bbox(gt);
    traj.final_prediction = pred;

    const RewardBreakdown b = score_trajectory(traj, gt, RewardWeights{});
    REQUIRE(b.r_steps.size() == 1);
    CHECK(b.r_steps[0] == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(b.r_process == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(b.r_format == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(b.r_final == 1.5);
    CHECK(b.total == doctest::Approx(1.5 + 0.5 * 0.375 + 0.2 * 0.2).epsilon(1e-12));
}
