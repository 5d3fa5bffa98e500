#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segloop/environment.hpp"
#include "segloop/mask_ops.hpp"

namespace segloop {

/// Composite reward weights. Defaults follow the training recipe:
/// total = alpha*final + beta*process + gamma*format with (1, 0.5, 0.2),
/// shaping r_t = lambda_delta*clip(delta, clip_lo, clip_hi)
///             + lambda_best*max(0, iou - best_so_far)
///             - lambda_cost*sum(kappa) - lambda_inv*[invalid] + r_pt.
struct RewardWeights {
    double alpha = 1.0;
    double beta = 0.5;
    double gamma = 0.2;
    double eta = 1.0;
    double lambda_delta = 1.0;
    double lambda_best = 0.5;
    double lambda_inv = 1.0;
    double lambda_cost = 0.05;
    double kappa_seg = 2.5;
    double kappa_geo = 1.0;
    double rho_pt = 0.05;
    double beta_pt = 0.1;
    double eps_pt = 0.01;
    double d_min = 8.0;
    double clip_lo = -0.1;
    double clip_hi = 0.5;
    double format_ok_bonus = 0.1;
    double format_violation_penalty = 0.5;

    void validate() const;
    nlohmann::json to_json() const;
    static RewardWeights from_json(const nlohmann::json& j);
};

/// Shaping state threaded by the caller across turns.
struct ShapingState {
    double iou_prev = 0.0;
    double iou_best = 0.0;
    std::vector<Pixel> point_history; // positive points, scene coordinates
};

enum class CallKind { segmentation, geometric };

/// Everything the per-step shaping needs to know about one turn.
struct TurnOutcome {
    std::vector<const BitMask*> new_masks;
    std::vector<CallKind> executed_calls;
    bool any_violation = false;
    std::vector<Pixel> new_positive_points; // scene coordinates
};

/// Novelty bonus minus redundancy penalty, gated on the turn's IoU gain.
double point_novelty(std::span<const Pixel> new_points, std::span<const Pixel> history,
                     double delta, const RewardWeights& w);

/// One turn of shaping; returns r_t and the advanced state.
std::pair<double, ShapingState> step_reward(const ShapingState& state, const TurnOutcome& outcome,
                                            const BitMask& gt, const RewardWeights& w);

/// Minimum-cost one-to-one assignment covering min(rows, cols) pairs.
/// Returns (row, col) pairs sorted by row.
std::vector<std::pair<int, int>> hungarian(const std::vector<std::vector<double>>& cost);

struct FinalRewardDiag {
    double mean_matched_iou = 0.0;
    double iou_box = 0.0;
    std::vector<std::pair<int, int>> matches; // (prediction index, gt component index)
};

/// Matched mean IoU over GT connected components plus half the IoU of
/// the union bounding boxes.
double final_reward(const FinalPrediction& pred, const BitMask& gt,
                    Connectivity connectivity = Connectivity::four,
                    FinalRewardDiag* diag = nullptr);

/// Per-turn bonus/penalty summed over the episode, clamped to [-1, 1].
double format_reward(const std::vector<bool>& turn_ok, const RewardWeights& w);

double total_return(double r_final, double r_process, double r_format, const RewardWeights& w);

struct RewardBreakdown {
    std::vector<double> r_steps;
    double r_process = 0.0;
    double r_format = 0.0;
    double r_final = 0.0;
    double total = 0.0;
};

nlohmann::json breakdown_to_json(const RewardBreakdown& b, const RewardWeights& w);

/// Scores a complete trajectory: shaping over every non-terminal turn,
/// format over all turns, final reward from the final prediction.
RewardBreakdown score_trajectory(const Trajectory& traj, const BitMask& gt,
                                 const RewardWeights& w,
                                 Connectivity connectivity = Connectivity::four);

/// Format verdict of a recorded turn: parse must succeed and no call
/// may have been rejected as invalid.
bool step_format_ok(const StepRecord& step);

} // namespace segloop
