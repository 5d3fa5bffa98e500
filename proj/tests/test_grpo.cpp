#include <doctest.h>

#include <cmath>
#include <random>

#include "segloop/grpo.hpp"

using namespace segloop;

namespace {

constexpr double kDelta = 1e-8;

RolloutGroup make_group(const std::vector<double>& returns) {
    RolloutGroup g;
    for (double s : returns) {
        TokenizedRollout r;
        r.contexts = {0};
        r.actions = {0};
        r.logp_old = {-1.0};
        r.logp_new = {-1.0};
        r.ret = s;
        g.rollouts.push_back(std::move(r));
    }
    compute_advantages(g, kDelta);
    return g;
}

// Random rollout groups under a random frozen policy; logp_new refreshed
// from `policy`.
std::vector<RolloutGroup> random_groups(const ToyPolicy& policy, const ToyPolicy& frozen,
                                        std::mt19937_64& rng, int n_groups, int group_size) {
    std::uniform_int_distribution<int> len(1, 4);
    std::uniform_real_distribution<double> ret(-2.0, 2.0);
    std::vector<RolloutGroup> groups;
    for (int g = 0; g < n_groups; ++g) {
        RolloutGroup group;
        for (int i = 0; i < group_size; ++i) {
            TokenizedRollout r;
            const int t = len(rng);
            for (int k = 0; k < t; ++k) {
                const int ctx = static_cast<int>(rng() % static_cast<std::uint64_t>(policy.num_contexts()));
                const int act = static_cast<int>(rng() % static_cast<std::uint64_t>(policy.num_actions()));
                r.contexts.push_back(ctx);
                r.actions.push_back(act);
                r.logp_old.push_back(frozen.logp(ctx, act));
            }
            r.ret = ret(rng);
            group.rollouts.push_back(std::move(r));
        }
        compute_advantages(group, kDelta);
        refresh_logp_new(policy, group);
        groups.push_back(std::move(group));
    }
    return groups;
}

double min_boundary_margin(const std::vector<RolloutGroup>& groups, double eps_clip) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& g : groups)
        for (const auto& r : g.rollouts)
            for (const double rho : importance_ratios(r)) {
                margin = std::min(margin, std::abs(rho - (1.0 - eps_clip)));
                margin = std::min(margin, std::abs(rho - (1.0 + eps_clip)));
            }
    return margin;
}

} // namespace

TEST_CASE("group_advantages fixtures") {
    SUBCASE("equal returns yield zero advantages") {
        const std::vector<double> s{1.3, 1.3, 1.3, 1.3};
        for (double a : group_advantages(s, kDelta)) CHECK(a == 0.0);
    }
    SUBCASE("two distinct returns") {
        const std::vector<double> s{1.0, 0.0};
        const auto a = group_advantages(s, kDelta);
        const double expect = 0.5 / std::sqrt(0.25 + kDelta);
        CHECK(a[0] == doctest::Approx(expect).epsilon(1e-14));
        CHECK(a[1] == doctest::Approx(-expect).epsilon(1e-14));
        CHECK(a[0] == doctest::Approx(0.99999998).epsilon(1e-9));
    }
    SUBCASE("paired returns") {
        const std::vector<double> s{2.0, 0.0, 0.0, 2.0};
        const auto a = group_advantages(s, kDelta);
        CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-7));
        CHECK(a[2] == a[1]);
        CHECK(a[3] == a[0]);
    }
    SUBCASE("mean zero and bounded std on random groups") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ret(-3.0, 3.0);
        for (int it = 0; it < 200; ++it) {
            const int g = 2 << (it % 3);
            std::vector<double> s;
            for (int i = 0; i < g; ++i) s.push_back(ret(rng));
            const auto a = group_advantages(s, kDelta);
            double mean = 0.0;
            double var = 0.0;
            for (double v : a) mean += v;
            mean /= static_cast<double>(g);
            for (double v : a) var += v * v;
            var /= static_cast<double>(g);
            CHECK(std::abs(mean) <= 1e-12);
            CHECK(std::sqrt(var) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("importance_ratios") {
    TokenizedRollout r;
    r.logp_old = {-1.0, -2.0, -0.5};
    r.logp_new = {-1.0, -2.0 + std::log(2.0), -0.5};
    const auto rho = importance_ratios(r);
    CHECK(rho[0] == 1.0);
    CHECK(rho[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(rho[2] == 1.0);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lp(-4.0, 0.0);
    TokenizedRollout rr;
    for (int i = 0; i < 32; ++i) {
        rr.logp_old.push_back(lp(rng));
        rr.logp_new.push_back(lp(rng));
    }
    const auto ratios = importance_ratios(rr);
    for (std::size_t i = 0; i < ratios.size(); ++i)
        CHECK(ratios[i] == doctest::Approx(std::exp(rr.logp_new[i] - rr.logp_old[i])).epsilon(1e-14));

    TokenizedRollout bad;
    bad.logp_old = {-1.0};
    bad.logp_new = {-1.0, -2.0};
    CHECK_THROWS_AS(importance_ratios(bad), ShapeError);
}

TEST_CASE("clipped_loss fixtures") {
    SUBCASE("unit ratios with normalized advantages cancel") {
        const RolloutGroup g = make_group({2.0, -1.0, 0.5, 0.25});
        CHECK(clipped_loss({&g, 1}, 0.2) == doctest::Approx(0.0).epsilon(1e-13));
    }
    SUBCASE("positive advantage clips above") {
        RolloutGroup g;
        TokenizedRollout r;
        r.contexts = {0};
        r.actions = {0};
        r.logp_old = {-1.0};
        r.logp_new = {-1.0 + std::log(2.0)}; // rho = 2
        r.ret = 0.0;
        g.rollouts.push_back(std::move(r));
        g.advantages = {1.0};
        CHECK(clipped_loss({&g, 1}, 0.2) == doctest::Approx(-1.2).epsilon(1e-13));
    }
    SUBCASE("negative advantage clips below") {
        RolloutGroup g;
        TokenizedRollout r;
        r.contexts = {0};
        r.actions = {0};
        r.logp_old = {-1.0};
        r.logp_new = {-1.0 + std::log(0.5)}; // rho = 0.5
        r.ret = 0.0;
        g.rollouts.push_back(std::move(r));
        g.advantages = {-1.0};
        CHECK(clipped_loss({&g, 1}, 0.2) == doctest::Approx(0.8).epsilon(1e-13));
    }
}

TEST_CASE("clipped_loss equals the unclipped surrogate inside the trust region") {
    std::mt19937_64 rng(21);
    ToyPolicy policy(2, 3);
    ToyPolicy frozen(2, 3);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 3; ++a) {
            const double base = jitter(rng);
            frozen.set_logit(c, a, base);
            policy.set_logit(c, a, base + jitter(rng) * 0.2);
        }
    const auto groups = random_groups(policy, frozen, rng, 8, 4);
    for (const auto& g : groups)
        for (const auto& r : g.rollouts)
            for (double rho : importance_ratios(r)) REQUIRE(std::abs(rho - 1.0) < 0.2);

    double unclipped = 0.0;
    for (const auto& g : groups) {
        double gsum = 0.0;
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            const auto ratios = importance_ratios(g.rollouts[i]);
            double rsum = 0.0;
            for (double rho : ratios) rsum += rho * g.advantages[i];
            gsum += rsum / static_cast<double>(ratios.size());
        }
        unclipped += -gsum / static_cast<double>(g.rollouts.size());
    }
    unclipped /= static_cast<double>(groups.size());
    CHECK(clipped_loss(groups, 0.2) == doctest::Approx(unclipped).epsilon(1e-13));
}

TEST_CASE("clipped_loss is invariant to return shifts and robust to rescaling") {
    std::mt19937_64 rng(33);
    ToyPolicy policy(2, 3);
    ToyPolicy frozen(2, 3);
    for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 3; ++a) {
            frozen.set_logit(c, a, 0.3 * a);
            policy.set_logit(c, a, 0.3 * a + 0.1 * c);
        }
    auto groups = random_groups(policy, frozen, rng, 6, 4);
    // keep group variance well above delta so the sigma shift is tiny
    for (auto& g : groups) {
        for (std::size_t i = 0; i < g.rollouts.size(); ++i)
            g.rollouts[i].ret = static_cast<double>(i);
        compute_advantages(g, kDelta);
    }
    const double base = clipped_loss(groups, 0.2);

    auto shifted = groups;
    for (auto& g : shifted) {
        for (auto& r : g.rollouts) r.ret += 17.5;
        compute_advantages(g, kDelta);
    }
    CHECK(clipped_loss(shifted, 0.2) == doctest::Approx(base).epsilon(1e-12));

    auto scaled = groups;
    for (auto& g : scaled) {
        for (auto& r : g.rollouts) r.ret *= 3.0;
        compute_advantages(g, kDelta);
    }
    CHECK(std::abs(clipped_loss(scaled, 0.2) - base) <= 10.0 * kDelta);
}

TEST_CASE("loss_gradient reduces to the policy gradient at ratio 1") {
    std::mt19937_64 rng(41);
    ToyPolicy policy(2, 3);
    for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 3; ++a) policy.set_logit(c, a, 0.1 * (a - c));

    auto groups = random_groups(policy, policy, rng, 1, 4); // frozen == current
    // single-token rollouts only, to match the analytic form below
    for (auto& g : groups)
        for (auto& r : g.rollouts) {
            r.contexts.resize(1);
            r.actions.resize(1);
            r.logp_old.resize(1);
            r.logp_new.resize(1);
        }
    refresh_logp_new(policy, groups[0]);
    for (auto& g : groups) compute_advantages(g, kDelta);

    const auto grad = loss_gradient(policy, groups, 0.2);

    std::vector<double> expect(6, 0.0);
    const auto& g = groups[0];
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const int ctx = g.rollouts[i].contexts[0];
        const int act = g.rollouts[i].actions[0];
        const auto p = policy.probs(ctx);
        for (int b = 0; b < 3; ++b) {
            const double dlogp = (b == act ? 1.0 : 0.0) - p[static_cast<std::size_t>(b)];
            expect[static_cast<std::size_t>(ctx * 3 + b)] +=
                -g.advantages[i] * dlogp / static_cast<double>(g.rollouts.size());
        }
    }
    for (std::size_t k = 0; k < 6; ++k)
        CHECK(grad[k] == doctest::Approx(expect[k]).epsilon(1e-12));
}

TEST_CASE("loss_gradient matches central finite differences") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> logits(-0.8, 0.8);
    const double eps_clip = 0.2;
    const double h = 1e-5;
    int checked = 0;

    while (checked < 10) {
        ToyPolicy policy(2, 3);
        ToyPolicy frozen(2, 3);
        for (int c = 0; c < 2; ++c)
            for (int a = 0; a < 3; ++a) {
                frozen.set_logit(c, a, logits(rng));
                policy.set_logit(c, a, logits(rng));
            }
        auto groups = random_groups(policy, frozen, rng, 2, 4);
        if (min_boundary_margin(groups, eps_clip) < 1e-3) continue;
        ++checked;

        const auto grad = loss_gradient(policy, groups, eps_clip);
        for (int c = 0; c < 2; ++c) {
            for (int a = 0; a < 3; ++a) {
                ToyPolicy plus = policy;
                plus.set_logit(c, a, policy.logit(c, a) + h);
                auto gp = groups;
                for (auto& g : gp) refresh_logp_new(plus, g);
                ToyPolicy minus = policy;
                minus.set_logit(c, a, policy.logit(c, a) - h);
                auto gm = groups;
                for (auto& g : gm) refresh_logp_new(minus, g);
                const double fd = (clipped_loss(gp, eps_clip) - clipped_loss(gm, eps_clip)) / (2 * h);
                const double an = grad[static_cast<std::size_t>(c * 3 + a)];
                const double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
                CHECK(std::abs(fd - an) / denom <= 1e-4);
            }
        }
    }
}

TEST_CASE("zero-advantage groups give zero gradient") {
    ToyPolicy policy(1, 3);
    RolloutGroup g = make_group({1.0, 1.0, 1.0, 1.0});
    refresh_logp_new(policy, g);
    for (double v : loss_gradient(policy, {&g, 1}, 0.2)) CHECK(v == 0.0);
}

TEST_CASE("toy training solves the prompt bandit") {
    const BanditSpec spec = make_prompt_bandit(3, 77, EnvConfig{}, RewardWeights{});
    REQUIRE(spec.arms.size() == 3);
    CHECK(spec.optimal_return > 1.0); // the target arm clears final+format

    ToyTrainConfig cfg;
    cfg.max_groups = 800;
    cfg.step_size = 0.3;
    cfg.seed = 3;
    const TrainResult result = train_toy(spec, cfg);
    REQUIRE(result.reached_at >= 0);
    CHECK(result.reached_at <= 800);
    const double greedy = spec.arms[static_cast<std::size_t>(result.policy.greedy(0))].ret;
    CHECK(greedy >= 0.95 * spec.optimal_return);
}

TEST_CASE("zero step size never moves the policy") {
    const BanditSpec spec = make_prompt_bandit(3, 77, EnvConfig{}, RewardWeights{});
    ToyTrainConfig cfg;
    cfg.max_groups = 50;
    cfg.step_size = 0.0;
    const TrainResult result = train_toy(spec, cfg);
    CHECK(result.curve.size() == 50);
    for (double v : result.policy.params()) CHECK(v == 0.0);
}

TEST_CASE("the default sampler draws groups of four") {
    CHECK(ToyTrainConfig{}.group_size == 4);
}

TEST_CASE("training is deterministic per seed") {
    const BanditSpec spec = make_prompt_bandit(2, 5, EnvConfig{}, RewardWeights{});
    ToyTrainConfig cfg;
    cfg.max_groups = 60;
    cfg.seed = 12;
    const TrainResult a = train_toy(spec, cfg);
    const TrainResult b = train_toy(spec, cfg);
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].mean_return == b.curve[i].mean_return);
        CHECK(a.curve[i].loss == b.curve[i].loss);
    }
}
