#include "segloop/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace segloop {

std::vector<double> group_advantages(std::span<const double> returns, double delta) {
    const std::size_t g = returns.size();
    std::vector<double> adv(g, 0.0);
    if (g == 0) return adv;
    // degenerate groups carry no signal; make the zeros exact
    bool degenerate = true;
    for (double s : returns) degenerate = degenerate && s == returns[0];
    if (degenerate) return adv;
    double mean = 0.0;
    for (double s : returns) mean += s;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double s : returns) var += (s - mean) * (s - mean);
    var /= static_cast<double>(g);
    const double sigma = std::sqrt(var + delta);
    for (std::size_t i = 0; i < g; ++i) adv[i] = (returns[i] - mean) / sigma;
    return adv;
}

std::vector<double> importance_ratios(const TokenizedRollout& rollout) {
    if (rollout.logp_old.size() != rollout.logp_new.size())
        throw ShapeError("logp_old and logp_new lengths differ");
    std::vector<double> out(rollout.logp_new.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::exp(rollout.logp_new[i] - rollout.logp_old[i]);
    return out;
}

double clipped_loss(std::span<const RolloutGroup> groups, double eps_clip) {
    double loss = 0.0;
    for (const auto& group : groups) {
        const std::size_t g = group.rollouts.size();
        double group_sum = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            const auto& r = group.rollouts[i];
            const double a = group.advantages[i];
            const auto ratios = importance_ratios(r);
            double rollout_sum = 0.0;
            for (double rho : ratios) {
                const double unclipped = rho * a;
                const double clipped = std::clamp(rho, 1.0 - eps_clip, 1.0 + eps_clip) * a;
                rollout_sum += std::min(unclipped, clipped);
            }
            group_sum += rollout_sum / static_cast<double>(ratios.size());
        }
        loss += -group_sum / static_cast<double>(g);
    }
    return loss / static_cast<double>(groups.size());
}

// ============================================================================
// ToyPolicy
// ============================================================================

ToyPolicy::ToyPolicy(int num_contexts, int num_actions)
    : num_contexts_(num_contexts), num_actions_(num_actions),
      logits_(static_cast<std::size_t>(num_contexts) * num_actions, 0.0) {
    if (num_contexts < 1 || num_actions < 1)
        throw ConfigError("policy needs at least one context and action");
}

std::vector<double> ToyPolicy::log_probs(int context) const {
    std::vector<double> lp(static_cast<std::size_t>(num_actions_));
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions_; ++a) max_logit = std::max(max_logit, logit(context, a));
    double z = 0.0;
    for (int a = 0; a < num_actions_; ++a) z += std::exp(logit(context, a) - max_logit);
    const double log_z = max_logit + std::log(z);
    for (int a = 0; a < num_actions_; ++a) lp[static_cast<std::size_t>(a)] = logit(context, a) - log_z;
    return lp;
}

std::vector<double> ToyPolicy::probs(int context) const {
    auto lp = log_probs(context);
    for (double& v : lp) v = std::exp(v);
    return lp;
}

double ToyPolicy::logp(int context, int action) const {
    return log_probs(context)[static_cast<std::size_t>(action)];
}

int ToyPolicy::sample(int context, std::mt19937_64& rng) const {
    const auto p = probs(context);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double u = dist(rng);
    for (int a = 0; a < num_actions_; ++a) {
        u -= p[static_cast<std::size_t>(a)];
        if (u <= 0.0) return a;
    }
    return num_actions_ - 1;
}

int ToyPolicy::greedy(int context) const {
    const auto p = probs(context);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

void refresh_logp_new(const ToyPolicy& policy, RolloutGroup& group) {
    for (auto& r : group.rollouts) {
        r.logp_new.resize(r.actions.size());
        for (std::size_t t = 0; t < r.actions.size(); ++t)
            r.logp_new[t] = policy.logp(r.contexts[t], r.actions[t]);
    }
}

void compute_advantages(RolloutGroup& group, double delta) {
    std::vector<double> returns;
    returns.reserve(group.rollouts.size());
    for (const auto& r : group.rollouts) returns.push_back(r.ret);
    group.advantages = group_advantages(returns, delta);
}

std::vector<double> loss_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups,
                                  double eps_clip) {
    std::vector<double> grad(policy.params().size(), 0.0);
    const double group_scale = 1.0 / static_cast<double>(groups.size());
    for (const auto& group : groups) {
        const double g_scale = group_scale / static_cast<double>(group.rollouts.size());
        for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
            const auto& r = group.rollouts[i];
            const double a = group.advantages[i];
            const double t_scale = g_scale / static_cast<double>(r.actions.size());
            for (std::size_t t = 0; t < r.actions.size(); ++t) {
                const double rho = std::exp(r.logp_new[t] - r.logp_old[t]);
                const double unclipped = rho * a;
                const double clipped = std::clamp(rho, 1.0 - eps_clip, 1.0 + eps_clip) * a;
                // d/dlogp of min(rho*A, clip(rho)*A): the clipped branch
                // is flat, the unclipped branch has slope rho*A.
                if (unclipped > clipped) continue;
                const double coef = rho * a;
                const int ctx = r.contexts[t];
                const int act = r.actions[t];
                const auto p = policy.probs(ctx);
                for (int b = 0; b < policy.num_actions(); ++b) {
                    const double indicator = b == act ? 1.0 : 0.0;
                    const double dlogp = indicator - p[static_cast<std::size_t>(b)];
                    grad[static_cast<std::size_t>(ctx) * policy.num_actions() + b] +=
                        -t_scale * coef * dlogp;
                }
            }
        }
    }
    return grad;
}

// ============================================================================
// Prompt-selection bandit
// ============================================================================

BanditSpec make_prompt_bandit(int region_count, std::uint64_t scene_seed, const EnvConfig& env,
                              const RewardWeights& weights) {
    BanditSpec spec;
    spec.env = env;
    spec.weights = weights;
    Scene scene = generate_scene(SceneSpec{region_count, 64, 64}, scene_seed);
    // target the last region so the uniform-init greedy arm is wrong
    const int target = scene.region_count();
    spec.task = Task::for_region(std::move(scene), target, "bandit");

    for (int id = 1; id <= spec.task.scene.region_count(); ++id) {
        const Pixel p = spec.task.scene.region_anchor(id);
        AnswerPayload answer;
        answer.items.push_back(
            AnswerItem{{PointPrompt{p.x, p.y, Polarity::positive}}, std::nullopt});
        Episode ep(spec.task, spec.env);
        ep.step(AgentTurn{"", {}, answer});
        const RewardBreakdown b = score_trajectory(ep.trajectory(), spec.task.gt_mask, weights);
        spec.arms.push_back(BanditArm{std::move(answer), b.total, "region" + std::to_string(id)});
        spec.optimal_return = std::max(spec.optimal_return, b.total);
    }
    return spec;
}

TrainResult train_toy(const BanditSpec& spec, const ToyTrainConfig& cfg, std::ostream* log) {
    if (spec.arms.empty()) throw ConfigError("bandit needs at least one arm");
    if (cfg.group_size < 1) throw ConfigError("group size must be at least 1");

    TrainResult result;
    result.policy = ToyPolicy(1, static_cast<int>(spec.arms.size()));
    ToyPolicy& policy = result.policy;
    std::mt19937_64 rng(cfg.seed);

    for (int it = 0; it < cfg.max_groups; ++it) {
        const std::vector<double> frozen_logp = policy.log_probs(0);

        RolloutGroup group;
        double mean_ret = 0.0;
        for (int i = 0; i < cfg.group_size; ++i) {
            const int arm = policy.sample(0, rng);
            TokenizedRollout r;
            r.contexts = {0};
            r.actions = {arm};
            r.logp_old = {frozen_logp[static_cast<std::size_t>(arm)]};
            r.ret = spec.arms[static_cast<std::size_t>(arm)].ret;
            mean_ret += r.ret;
            group.rollouts.push_back(std::move(r));
        }
        mean_ret /= static_cast<double>(cfg.group_size);
        compute_advantages(group, cfg.delta);
        refresh_logp_new(policy, group);

        const std::span<const RolloutGroup> groups(&group, 1);
        const double loss = clipped_loss(groups, cfg.eps_clip);
        const auto grad = loss_gradient(policy, groups, cfg.eps_clip);

        double grad_norm = 0.0;
        for (double g : grad) grad_norm += g * g;
        grad_norm = std::sqrt(grad_norm);
        if (!std::isfinite(loss) || !std::isfinite(grad_norm))
            throw TrainingError("non-finite loss or gradient at iteration " + std::to_string(it));

        auto params = policy.params();
        for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.step_size * grad[k];

        result.curve.push_back(IterStats{it, mean_ret, loss, grad_norm});
        if (log) {
            *log << nlohmann::json{
                        {"it", it}, {"mean_S", mean_ret}, {"loss", loss}, {"grad_norm", grad_norm}}
                        .dump()
                 << '\n';
        }

        const double greedy_ret = spec.arms[static_cast<std::size_t>(policy.greedy(0))].ret;
        if (result.reached_at < 0 && greedy_ret >= cfg.reach_fraction * spec.optimal_return)
            result.reached_at = it + 1;
        if (cfg.stop_when_reached && result.reached_at >= 0) break;
    }
    return result;
}

} // namespace segloop
