#include <doctest.h>

#include <cmath>

#include "grpolab/analysis.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/trainers.hpp"

using namespace grpolab;

namespace {

constexpr Token kEos = 1;

/// One-prompt group of single-token responses with chosen rewards and sampling ratios.
/// Response i is token `tokens[i]`; its recorded old log-probability is set so that the
/// ratio against `current` equals `ratios[i]`.
RolloutGroup single_token_group(const PolicyParameters& current, const std::vector<Token>& tokens,
                                const std::vector<int>& rewards, const std::vector<double>& ratios,
                                const TrainerConfig& cfg) {
    RolloutGroup g;
    g.prompt = {{0}, "q"};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        Trajectory t;
        t.prompt = g.prompt;
        t.response = {tokens[i]};
        t.old_log_probs = {log_prob(current, t.prompt.tokens, tokens[i]) - std::log(ratios[i])};
        t.reward = rewards[i];
        g.trajectories.push_back(t);
    }
    assign_advantages(g, cfg);
    return g;
}

TrainerConfig small_config() {
    TrainerConfig c;
    c.horizon = 8;
    c.group_size = 2;
    return c;
}

double trajectory_log_likelihood(const PolicyParameters& p, const Trajectory& t) {
    std::vector<Token> ctx = t.prompt.tokens;
    double total = 0.0;
    for (Token tok : t.response) {
        total += log_prob(p, ctx, tok);
        ctx.push_back(tok);
    }
    return total;
}

}  // namespace

TEST_SUITE("trainers") {

TEST_CASE("published hyperparameters are the defaults") {
    const TrainerConfig c;
    CHECK(c.clip_epsilon == 0.2);
    CHECK(c.kl_beta == 1e-3);
    CHECK(c.learning_rate == 1e-6);
    CHECK(c.group_size == 5);
    CHECK(c.horizon == 1280);
    CHECK(c.temperature == 0.6);
    CHECK(c.batch_prompts == 64);
    CHECK(c.mini_batch_prompts == 8);
    CHECK(c.positive_weight == 0.5);
    CHECK(c.negative_weight == 0.5);
    CHECK(c.length_scaling == LengthScaling::kPerResponse);
    CHECK(c.zero_variance == ZeroVarianceHandling::kSkip);
    CHECK(c.kl_ratio == KlRatio::kStandard);
    CHECK(c.std_kind == StdKind::kPopulation);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("invalid trainer settings are rejected") {
    TrainerConfig c;
    c.group_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainerConfig{};
    c.clip_epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainerConfig{};
    c.mini_batch_prompts = 100;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_variant("ppo"), ConfigError);
    CHECK(parse_variant(to_string(Variant::kFisftPm)) == Variant::kFisftPm);
}

TEST_CASE("advantages for two responses") {
    const std::vector<int> r = {1, 0};
    const auto a = compute_advantages(r, TrainerConfig{});
    CHECK(a.reward_std == doctest::Approx(0.5));
    CHECK(a.per_trajectory[0] == doctest::Approx(1.0));
    CHECK(a.per_trajectory[1] == doctest::Approx(-1.0));
}

TEST_CASE("advantages for two of five correct") {
    const std::vector<int> r = {1, 1, 0, 0, 0};
    const auto a = compute_advantages(r, TrainerConfig{});
    CHECK(*a.positive == doctest::Approx(1.224745).epsilon(1e-6));
    CHECK(*a.negative == doctest::Approx(-0.816497).epsilon(1e-6));
    CHECK(*a.scaled_positive(10) == doctest::Approx(0.1224745).epsilon(1e-6));
    TrainerConfig sample;
    sample.std_kind = StdKind::kSample;
    const auto s = compute_advantages(r, sample);
    CHECK(*s.positive == doctest::Approx(0.6 / std::sqrt(0.3)));
}

TEST_CASE("zero-variance groups are skipped or zeroed") {
    const std::vector<int> r = {1, 1, 1, 1, 1};
    const auto a = compute_advantages(r, TrainerConfig{});
    CHECK(a.skipped);
    TrainerConfig zero;
    zero.zero_variance = ZeroVarianceHandling::kZeroAdvantage;
    const auto z = compute_advantages(r, zero);
    CHECK_FALSE(z.skipped);
    for (double v : z.per_trajectory) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("class weight peaks at moderate difficulty") {
    auto weight = [](int correct) {
        std::vector<int> r(5, 0);
        for (int i = 0; i < correct; ++i) {
            r[static_cast<std::size_t>(i)] = 1;
        }
        const auto a = compute_advantages(r, TrainerConfig{});
        return std::abs(*a.positive * correct);
    };
    CHECK(weight(2) > weight(1));
    CHECK(weight(3) > weight(4));
    CHECK(weight(2) > weight(4));
    CHECK(weight(3) > weight(1));
}

TEST_CASE("advantages need every reward") {
    RolloutGroup g;
    g.trajectories.resize(2);
    g.trajectories[0].reward = 1;
    CHECK_THROWS_AS(assign_advantages(g, TrainerConfig{}), ContractViolation);
}

TEST_CASE("token KL values") {
    CHECK(kl_penalty(-1.0, -1.0, KlRatio::kStandard) == 0.0);
    // standard: ratio = reference / current
    CHECK(kl_penalty(std::log(0.25), std::log(0.5), KlRatio::kStandard) == doctest::Approx(0.306853).epsilon(1e-6));
    CHECK(kl_penalty(std::log(0.5), std::log(0.25), KlRatio::kStandard) == doctest::Approx(0.193147).epsilon(1e-6));
    // paper-literal: ratio = current / old
    CHECK(kl_penalty(std::log(0.5), std::log(0.25), KlRatio::kPaperLiteral) == doctest::Approx(0.306853).epsilon(1e-6));
    for (double x = -5.0; x <= 5.0; x += 0.25) {
        CHECK(kl_penalty(x, 0.3, KlRatio::kStandard) >= 0.0);
    }
}

TEST_CASE("clipped surrogate on single tokens") {
    Rng rng = derive_rng({1});
    const auto p = random_parameters(Architecture::tabular(2, 1), 0.5, rng);
    TrainerConfig cfg = small_config();
    const auto g = single_token_group(p, {0, kEos}, {1, 0}, {1.5, 0.5}, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto out = grpo_wo_kl_objective(groups, p, cfg);
    // min(1.5, 1.2) * 1 and min(-0.5, -0.8), averaged over the group of two
    CHECK(out.token_contributions[0][0] == doctest::Approx(1.2 / 2));
    CHECK(out.token_contributions[1][0] == doctest::Approx(-0.8 / 2));
    CHECK(out.total == doctest::Approx(0.2));
    CHECK(out.clipped_tokens == 2);
    for (double v : out.gradient) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("at the sampling point the surrogate is the mean advantage") {
    Rng rng = derive_rng({2});
    const auto p = random_parameters(Architecture::tabular(2, 1), 0.5, rng);
    TrainerConfig cfg = small_config();
    cfg.group_size = 3;
    const auto g = single_token_group(p, {0, kEos, 0}, {1, 0, 0}, {1.0, 1.0, 1.0}, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto out = grpo_wo_kl_objective(groups, p, cfg);
    CHECK(std::abs(out.surrogate) < 1e-15);
    CHECK(out.isr_min == 1.0);
    CHECK(out.isr_max == 1.0);
    CHECK(out.clipped_tokens == 0);
}

TEST_CASE("KL term is zero against an identical reference") {
    Rng rng = derive_rng({3});
    const auto p = random_parameters(Architecture::tabular(3, 1), 0.5, rng);
    TrainerConfig cfg = small_config();
    const auto g = single_token_group(p, {0, 2}, {1, 0}, {1.0, 1.0}, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto out = grpo_objective(groups, p, snapshot(p), cfg);
    CHECK(out.kl == doctest::Approx(0.0));
    const auto wo = grpo_wo_kl_objective(groups, p, cfg);
    CHECK(relative_difference(out.gradient, wo.gradient) < 1e-12);
}

TEST_CASE("filtered SFT without negatives is the weighted positive term") {
    Rng rng = derive_rng({4});
    const auto p = random_parameters(Architecture::tabular(3, 1), 0.5, rng);
    TrainerConfig cfg = small_config();
    const auto g = single_token_group(p, {0, 2}, {1, 1}, {1.0, 1.0}, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto pm = fisft_pm_step(groups, p, cfg);
    const auto plus = fisft_plus_step(groups, p, cfg);
    CHECK(pm.total == doctest::Approx(0.5 * plus.total));
    for (std::size_t i = 0; i < pm.gradient.size(); ++i) {
        CHECK(pm.gradient[i] == doctest::Approx(0.5 * plus.gradient[i]));
    }
}

TEST_CASE("filtered SFT combination is linear") {
    Rng rng = derive_rng({5});
    const auto p = random_parameters(Architecture::mlp(4, 6, 1, 5), 0.5, rng);
    TrainerConfig cfg = small_config();
    cfg.positive_weight = 0.3;
    cfg.negative_weight = 0.7;
    Rng sampler = derive_rng({6});
    auto g = rollout_group(snapshot(p), Prompt{{0, 2}, "q"}, 4, {1.0, {6, 3}}, sampler);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.trajectories[i].reward = static_cast<int>(i % 2);
    }
    assign_advantages(g, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto pm = fisft_pm_step(groups, p, cfg);
    const auto plus = fisft_plus_step(groups, p, cfg);
    const auto minus = fisft_minus_step(groups, p, cfg);
    CHECK(minus.total > 0.0);  // negated log-likelihood
    for (std::size_t i = 0; i < pm.gradient.size(); ++i) {
        CHECK(pm.gradient[i] == doctest::Approx(0.3 * plus.gradient[i] + 0.7 * minus.gradient[i]));
    }
}

TEST_CASE("batch normalization divides by every trajectory") {
    Rng rng = derive_rng({7});
    const auto p = random_parameters(Architecture::tabular(3, 1), 0.5, rng);
    TrainerConfig cfg = small_config();
    cfg.group_size = 4;
    const auto g = single_token_group(p, {0, 2, 0, 2}, {1, 0, 0, 0}, {1.0, 1.0, 1.0, 1.0}, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto by_class = fisft_plus_step(groups, p, cfg);
    cfg.fisft_normalization = FisftNormalization::kBatch;
    const auto by_batch = fisft_plus_step(groups, p, cfg);
    CHECK(by_batch.total == doctest::Approx(by_class.total / 4.0));
}

TEST_CASE("one update raises the correct response and lowers the incorrect one") {
    for (const Variant v : {Variant::kGrpo, Variant::kGrpoWoKl, Variant::kFisftPm}) {
        CAPTURE(to_string(v));
        Rng rng = derive_rng({8});
        auto p = random_parameters(Architecture::tabular(3, 1), 0.5, rng);
        TrainerConfig cfg = small_config();
        Rng sampler = derive_rng({9});
        RolloutGroup g = rollout_group(snapshot(p), Prompt{{0}, "q"}, 2, {1.0, {5, 2}}, sampler);
        // Force distinct responses so the two likelihoods can move apart.
        g.trajectories[0].response = {0, 2};
        g.trajectories[1].response = {1, 2};
        for (auto& t : g.trajectories) {
            t.old_log_probs.clear();
            std::vector<Token> ctx = t.prompt.tokens;
            for (Token tok : t.response) {
                t.old_log_probs.push_back(log_prob(p, ctx, tok));
                ctx.push_back(tok);
            }
        }
        g.trajectories[0].reward = 1;
        g.trajectories[1].reward = 0;
        assign_advantages(g, cfg);
        const std::vector<RolloutGroup> groups = {g};
        const double pos_before = trajectory_log_likelihood(p, g.trajectories[0]);
        const double neg_before = trajectory_log_likelihood(p, g.trajectories[1]);
        const auto loss = variant_objective(v, groups, p, snapshot(p), cfg);
        p = apply_update(p, loss.gradient, 0.1);
        CHECK(trajectory_log_likelihood(p, g.trajectories[0]) > pos_before);
        CHECK(trajectory_log_likelihood(p, g.trajectories[1]) < neg_before);
    }
}

TEST_CASE("objectives are thread-count independent") {
    Rng rng = derive_rng({10});
    const auto p = random_parameters(Architecture::mlp(5, 8, 2, 6), 0.7, rng);
    TrainerConfig cfg = small_config();
    cfg.group_size = 4;
    std::vector<RolloutGroup> groups;
    for (int i = 0; i < 6; ++i) {
        Rng s = derive_rng({11, static_cast<std::uint64_t>(i)});
        auto g = rollout_group(snapshot(p), Prompt{{static_cast<Token>(i % 4)}, "q"}, 4, {1.0, {8, 4}}, s);
        for (std::size_t k = 0; k < g.size(); ++k) {
            g.trajectories[k].reward = static_cast<int>((k + static_cast<std::size_t>(i)) % 2);
        }
        assign_advantages(g, cfg);
        groups.push_back(g);
    }
    const auto single = grpo_objective(groups, p, snapshot(p), cfg);
    cfg.threads = 3;
    const auto multi = grpo_objective(groups, p, snapshot(p), cfg);
    CHECK(single.total == multi.total);
    CHECK(single.gradient == multi.gradient);
}

TEST_CASE("trainer iterations are deterministic") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    GenerationConfig gen;
    const auto train_set = generate_instances(gen, 40, 1, "train");
    Rng rng = derive_rng({12});
    const auto init = random_parameters(Architecture::mlp(task.vocabulary().size(), 16, 2, 8), 0.3, rng);
    TrainerConfig cfg;
    cfg.horizon = 16;
    cfg.batch_prompts = 8;
    cfg.mini_batch_prompts = 4;
    cfg.learning_rate = 0.1;
    Trainer a(Variant::kGrpo, cfg, task, train_set, init, snapshot(init), 5);
    Trainer b(Variant::kGrpo, cfg, task, train_set, init, snapshot(init), 5);
    for (std::size_t step = 1; step <= 3; ++step) {
        const auto ma = a.run_iteration(step);
        const auto mb = b.run_iteration(step);
        CHECK(ma.objective == mb.objective);
        CHECK(ma.n_correct == mb.n_correct);
        CHECK(ma.n_correct + ma.n_incorrect == 8 * 5);
    }
    CHECK(a.params().values == b.params().values);
}

}  // TEST_SUITE
