#include "segloop/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace segloop {

void RewardWeights::validate() const {
    if (!(clip_lo < 0.0 && 0.0 < clip_hi)) throw ConfigError("clip bounds must straddle zero");
    if (!(d_min > 0.0)) throw ConfigError("d_min must be positive");
    for (double v : {alpha, beta, gamma, eta, lambda_delta, lambda_best, lambda_inv, lambda_cost,
                     kappa_seg, kappa_geo, rho_pt, beta_pt, eps_pt, format_ok_bonus,
                     format_violation_penalty})
        if (!std::isfinite(v)) throw ConfigError("reward weights must be finite");
}

nlohmann::json RewardWeights::to_json() const {
    return nlohmann::json{
        {"alpha", alpha},
        {"beta", beta},
        {"gamma", gamma},
        {"eta", eta},
        {"lambda_delta", lambda_delta},
        {"lambda_best", lambda_best},
        {"lambda_inv", lambda_inv},
        {"lambda_cost", lambda_cost},
        {"kappa_seg", kappa_seg},
        {"kappa_geo", kappa_geo},
        {"rho_pt", rho_pt},
        {"beta_pt", beta_pt},
        {"eps_pt", eps_pt},
        {"d_min", d_min},
        {"clip_lo", clip_lo},
        {"clip_hi", clip_hi},
        {"format_ok_bonus", format_ok_bonus},
        {"format_violation_penalty", format_violation_penalty},
    };
}

RewardWeights RewardWeights::from_json(const nlohmann::json& j) {
    RewardWeights w;
    if (!j.is_object()) throw ConfigError("weights must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw ConfigError("weight '" + key + "' must be a number");
        const double v = value.get<double>();
        if (key == "alpha") w.alpha = v;
        else if (key == "beta") w.beta = v;
        else if (key == "gamma") w.gamma = v;
        else if (key == "eta") w.eta = v;
        else if (key == "lambda_delta") w.lambda_delta = v;
        else if (key == "lambda_best") w.lambda_best = v;
        else if (key == "lambda_inv") w.lambda_inv = v;
        else if (key == "lambda_cost") w.lambda_cost = v;
        else if (key == "kappa_seg") w.kappa_seg = v;
        else if (key == "kappa_geo") w.kappa_geo = v;
        else if (key == "rho_pt") w.rho_pt = v;
        else if (key == "beta_pt") w.beta_pt = v;
        else if (key == "eps_pt") w.eps_pt = v;
        else if (key == "d_min") w.d_min = v;
        else if (key == "clip_lo") w.clip_lo = v;
        else if (key == "clip_hi") w.clip_hi = v;
        else if (key == "format_ok_bonus") w.format_ok_bonus = v;
        else if (key == "format_violation_penalty") w.format_violation_penalty = v;
        else throw ConfigError("unknown weight '" + key + "'");
    }
    w.validate();
    return w;
}

double point_novelty(std::span<const Pixel> new_points, std::span<const Pixel> history,
                     double delta, const RewardWeights& w) {
    if (!(delta > w.eps_pt)) return 0.0;
    int n_new = 0;
    double redund = 0.0;
    for (const auto& p : new_points) {
        double min_dist = std::numeric_limits<double>::infinity();
        for (const auto& h : history) {
            const double dx = p.x - h.x;
            const double dy = p.y - h.y;
            min_dist = std::min(min_dist, std::sqrt(dx * dx + dy * dy));
        }
        if (min_dist >= w.d_min) {
            ++n_new;
        } else {
            redund += std::clamp(1.0 - min_dist / w.d_min, 0.0, 1.0);
        }
    }
    return w.rho_pt * n_new - w.beta_pt * redund;
}

std::pair<double, ShapingState> step_reward(const ShapingState& state, const TurnOutcome& outcome,
                                            const BitMask& gt, const RewardWeights& w) {
    double iou_t = state.iou_prev;
    double delta = 0.0;
    if (!outcome.new_masks.empty()) {
        iou_t = 0.0;
        for (const BitMask* m : outcome.new_masks) {
            if (!m->same_dims(gt)) throw DimensionError("candidate mask dims disagree with gt");
            iou_t = std::max(iou_t, iou(*m, gt));
        }
        delta = iou_t - state.iou_prev;
    }

    double cost = 0.0;
    for (CallKind kind : outcome.executed_calls)
        cost += kind == CallKind::segmentation ? w.kappa_seg : w.kappa_geo;
    cost *= w.lambda_cost;

    const double r = w.lambda_delta * std::clamp(delta, w.clip_lo, w.clip_hi) +
                     w.lambda_best * std::max(0.0, iou_t - state.iou_best) - cost -
                     (outcome.any_violation ? w.lambda_inv : 0.0) +
                     point_novelty(outcome.new_positive_points, state.point_history, delta, w);

    ShapingState next;
    next.iou_prev = iou_t;
    next.iou_best = std::max(state.iou_best, iou_t);
    next.point_history = state.point_history;
    next.point_history.insert(next.point_history.end(), outcome.new_positive_points.begin(),
                              outcome.new_positive_points.end());
    return {r, std::move(next)};
}

// ============================================================================
// Hungarian assignment
// ============================================================================

namespace {

// Potentials-based Kuhn-Munkres for n <= m, 1-indexed internally.
// Returns col index per row (0-based).
std::vector<int> assign_rows(const std::vector<std::vector<double>>& a, int n, int m) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace

std::vector<std::pair<int, int>> hungarian(const std::vector<std::vector<double>>& cost) {
    const int rows = static_cast<int>(cost.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(cost[0].size());
    if (rows == 0 || cols == 0) return {};
    for (const auto& row : cost) {
        if (static_cast<int>(row.size()) != cols)
            throw ShapeError("cost matrix rows have unequal lengths");
        for (double c : row)
            if (!std::isfinite(c)) throw ShapeError("cost matrix entries must be finite");
    }

    std::vector<std::pair<int, int>> out;
    if (rows <= cols) {
        const auto row_to_col = assign_rows(cost, rows, cols);
        for (int i = 0; i < rows; ++i) out.emplace_back(i, row_to_col[i]);
    } else {
        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t[j][i] = cost[i][j];
        const auto col_to_row = assign_rows(t, cols, rows);
        for (int j = 0; j < cols; ++j) out.emplace_back(col_to_row[j], j);
        std::sort(out.begin(), out.end());
    }
    return out;
}

double final_reward(const FinalPrediction& pred, const BitMask& gt, Connectivity connectivity,
                    FinalRewardDiag* diag) {
    if (gt.none()) throw GtEmptyError("ground truth mask is empty");
    for (const auto& m : pred.masks)
        if (!m.same_dims(gt)) throw DimensionError("prediction mask dims disagree with gt");

    const std::vector<BitMask> comps = connected_components(gt, connectivity);

    double matched_sum = 0.0;
    std::vector<std::pair<int, int>> matches;
    if (!pred.masks.empty()) {
        std::vector<std::vector<double>> cost(pred.masks.size(),
                                              std::vector<double>(comps.size()));
        for (std::size_t i = 0; i < pred.masks.size(); ++i)
            for (std::size_t j = 0; j < comps.size(); ++j)
                cost[i][j] = 1.0 - iou(pred.masks[i], comps[j]);
        matches = hungarian(cost);
        for (const auto& [i, j] : matches) matched_sum += 1.0 - cost[i][j];
    }
    const double mean_matched = matched_sum / static_cast<double>(comps.size());

    const double iou_box = box_iou(union_bbox(pred.masks), union_bbox(comps));
    if (diag) {
        diag->mean_matched_iou = mean_matched;
        diag->iou_box = iou_box;
        diag->matches = std::move(matches);
    }
    return mean_matched + 0.5 * iou_box;
}

double format_reward(const std::vector<bool>& turn_ok, const RewardWeights& w) {
    double sum = 0.0;
    for (bool ok : turn_ok) sum += ok ? w.format_ok_bonus : -w.format_violation_penalty;
    return std::clamp(sum, -1.0, 1.0);
}

double total_return(double r_final, double r_process, double r_format, const RewardWeights& w) {
    return w.alpha * r_final + w.beta * r_process + w.gamma * r_format;
}

bool step_format_ok(const StepRecord& step) {
    if (!step.verdict.ok) return false;
    for (const auto& ev : step.events)
        if (ev.kind == ToolEvent::Kind::invalid) return false;
    return true;
}

nlohmann::json breakdown_to_json(const RewardBreakdown& b, const RewardWeights& w) {
    return nlohmann::json{
        {"r_steps", b.r_steps}, {"R_process", b.r_process}, {"R_format", b.r_format},
        {"R_final", b.r_final}, {"S", b.total},             {"weights", w.to_json()},
    };
}

RewardBreakdown score_trajectory(const Trajectory& traj, const BitMask& gt,
                                 const RewardWeights& w, Connectivity connectivity) {
    RewardBreakdown out;
    ShapingState state;
    std::vector<char> turn_ok(traj.steps.size(), 0);

    const bool has_terminal = traj.final_prediction.has_value();
    for (std::size_t s = 0; s < traj.steps.size(); ++s) {
        const StepRecord& step = traj.steps[s];
        turn_ok[s] = step_format_ok(step);

        // Shaping covers tool turns only; the terminal turn feeds R_final.
        const bool terminal_step = has_terminal && s + 1 == traj.steps.size();
        if (terminal_step) continue;

        TurnOutcome outcome;
        outcome.any_violation = !step_format_ok(step);
        for (const auto& ev : step.events) {
            if (ev.kind == ToolEvent::Kind::segment)
                outcome.executed_calls.push_back(CallKind::segmentation);
            else if (ev.kind == ToolEvent::Kind::zoom || ev.kind == ToolEvent::Kind::rotate)
                outcome.executed_calls.push_back(CallKind::geometric);
        }
        for (int idx : step.candidates_added) {
            const Candidate& cand = traj.candidates[static_cast<std::size_t>(idx)];
            outcome.new_masks.push_back(&cand.mask);
            for (const auto& p : cand.prompts.points)
                if (p.polarity == Polarity::positive)
                    outcome.new_positive_points.push_back(Pixel{p.x, p.y});
        }
        auto [r, next] = step_reward(state, outcome, gt, w);
        out.r_steps.push_back(r);
        state = std::move(next);
    }

    double process = 0.0;
    for (double r : out.r_steps) process += r;
    out.r_process = w.eta * process;

    std::vector<bool> oks(turn_ok.begin(), turn_ok.end());
    out.r_format = format_reward(oks, w);

    out.r_final = traj.final_prediction ? final_reward(*traj.final_prediction, gt, connectivity)
                                        : 0.0;
    out.total = total_return(out.r_final, out.r_process, out.r_format, w);
    return out;
}

} // namespace segloop
