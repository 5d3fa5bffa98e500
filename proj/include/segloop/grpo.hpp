#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "segloop/environment.hpp"
#include "segloop/reward.hpp"

namespace segloop {

/// One rollout reduced to its non-observation action tokens, with
/// per-token log-probabilities under the frozen and current policies.
struct TokenizedRollout {
    std::vector<int> contexts;
    std::vector<int> actions;
    std::vector<double> logp_old;
    std::vector<double> logp_new;
    double ret = 0.0;
};

struct RolloutGroup {
    std::vector<TokenizedRollout> rollouts;
    std::vector<double> advantages;
};

/// Group-relative advantages: (S_i - mean) / sqrt(pop_var + delta).
std::vector<double> group_advantages(std::span<const double> returns, double delta);

/// Per-token exp(logp_new - logp_old).
std::vector<double> importance_ratios(const TokenizedRollout& rollout);

/// Clipped surrogate without a KL term, averaged per token, per rollout,
/// per group, then negated. Expects advantages to be filled in.
double clipped_loss(std::span<const RolloutGroup> groups, double eps_clip);

/// Tabular softmax policy over a discrete context/action space.
class ToyPolicy {
public:
    ToyPolicy(int num_contexts, int num_actions);

    int num_contexts() const { return num_contexts_; }
    int num_actions() const { return num_actions_; }

    double logit(int context, int action) const { return logits_[index(context, action)]; }
    void set_logit(int context, int action, double v) { logits_[index(context, action)] = v; }

    std::vector<double> log_probs(int context) const;
    std::vector<double> probs(int context) const;
    double logp(int context, int action) const;

    int sample(int context, std::mt19937_64& rng) const;
    int greedy(int context) const;

    std::span<double> params() { return logits_; }
    std::span<const double> params() const { return logits_; }

private:
    std::size_t index(int context, int action) const {
        return static_cast<std::size_t>(context) * num_actions_ + action;
    }
    int num_contexts_;
    int num_actions_;
    std::vector<double> logits_;
};

/// Recomputes every rollout's logp_new from the current policy.
void refresh_logp_new(const ToyPolicy& policy, RolloutGroup& group);

void compute_advantages(RolloutGroup& group, double delta);

/// Exact gradient of clipped_loss over the policy's logit table.
/// The clipped branch contributes zero gradient.
std::vector<double> loss_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups,
                                  double eps_clip);

// ============================================================================
// Toy training: prompt-selection bandit over a real scene
// ============================================================================

struct BanditArm {
    AnswerPayload answer;
    double ret = 0.0;
    std::string label;
};

/// One arm per scene region: commit that region's anchor point as the
/// answer. Returns are scored through the full reward stack, so exactly
/// one arm (the target region) is optimal.
struct BanditSpec {
    Task task;
    EnvConfig env;
    RewardWeights weights;
    std::vector<BanditArm> arms;
    double optimal_return = 0.0;
};

BanditSpec make_prompt_bandit(int region_count, std::uint64_t scene_seed, const EnvConfig& env,
                              const RewardWeights& weights);

struct ToyTrainConfig {
    int group_size = 4;
    int max_groups = 2000;
    double step_size = 0.3;
    double eps_clip = 0.2;
    double delta = 1e-8;
    std::uint64_t seed = 0;
    bool stop_when_reached = false;
    double reach_fraction = 0.95;
};

struct IterStats {
    int it = 0;
    double mean_return = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<IterStats> curve;
    ToyPolicy policy{1, 1};
    int reached_at = -1; // first iteration where the greedy arm is near-optimal
};

/// GRPO on the bandit; the frozen policy is refreshed every group.
/// Deterministic for a fixed seed. Emits one JSON line per iteration
/// when a log stream is given.
TrainResult train_toy(const BanditSpec& spec, const ToyTrainConfig& cfg,
                      std::ostream* log = nullptr);

} // namespace segloop
