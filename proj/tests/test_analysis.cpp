#include <doctest.h>

#include <cmath>

#include "grpolab/analysis.hpp"
#include "grpolab/tasks.hpp"

using namespace grpolab;

namespace {

Trajectory make_trajectory(std::vector<Token> prompt, std::vector<Token> response, const PolicyParameters& p,
                           int reward) {
    Trajectory t;
    t.prompt = {std::move(prompt), "q"};
    t.response = std::move(response);
    std::vector<Token> ctx = t.prompt.tokens;
    for (Token tok : t.response) {
        t.old_log_probs.push_back(log_prob(p, ctx, tok));
        ctx.push_back(tok);
    }
    t.reward = reward;
    return t;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("two-token vocabulary matches the hand-derived gradient") {
    // Tabular order 1, zero parameters, prompt (0), horizon 2: responses are single tokens.
    // Rewards (1,0) give advantages (+1,-1); with p = (1/2, 1/2) each ratio gradient on the
    // prompt's row is e_o - p, so the group average there is (+1 (-1/2, 1/2) - (1/2, -1/2)) / 2.
    const auto p = zero_parameters(Architecture::tabular(2, 1));
    TrainerConfig cfg;
    cfg.horizon = 2;
    cfg.group_size = 2;
    RolloutGroup g;
    g.prompt = {{0}, "q"};
    g.trajectories = {make_trajectory({0}, {1}, p, 1), make_trajectory({0}, {0}, p, 0)};
    assign_advantages(g, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const std::vector<double> expected = {-0.5, 0.5, 0.0, 0.0, 0.0, 0.0};
    for (const auto scaling : {LengthScaling::kPerResponse, LengthScaling::kFixedHorizon}) {
        cfg.length_scaling = scaling;
        const double scale = scaling == LengthScaling::kPerResponse ? 1.0 : 0.5;
        const auto rep = equivalence_check(p, groups, cfg);
        CHECK(rep.pass);
        CHECK(rep.pairs.size() == 6);
        const auto ratio_sum = simplified_objective(groups, p, cfg).gradient;
        const auto split = simplified_objective(groups, p, cfg, SimplifiedForm::kClassSplit).gradient;
        const auto score = decomposed_gradient(groups, p, cfg);
        const auto clipped = grpo_wo_kl_objective(groups, p, cfg).gradient;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(ratio_sum[i] == doctest::Approx(scale * expected[i]).epsilon(1e-14));
            CHECK(split[i] == doctest::Approx(scale * expected[i]).epsilon(1e-14));
            CHECK(score[i] == doctest::Approx(scale * expected[i]).epsilon(1e-14));
            CHECK(clipped[i] == doctest::Approx(scale * expected[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("equivalence holds for random groups at the sampling point") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng = derive_rng({seed});
        const auto p = random_parameters(Architecture::mlp(4, 8, 2, 5), 1.0, rng);
        TrainerConfig cfg;
        cfg.horizon = 8;
        cfg.group_size = 4;
        cfg.length_scaling = LengthScaling::kFixedHorizon;
        auto g = rollout_group(snapshot(p), Prompt{{0, 1}, "q"}, 4, {1.0, {8, 3}}, rng);
        for (std::size_t i = 0; i < 4; ++i) {
            g.trajectories[i].reward = i < 1 + seed % 3 ? 1 : 0;
        }
        assign_advantages(g, cfg);
        const std::vector<RolloutGroup> groups = {g};
        const auto rep = equivalence_check(p, groups, cfg);
        CHECK(rep.pass);
        CHECK(rep.max_rel_diff < kIdentityTolerance);
        CHECK(rep.clip_active_fraction == 0.0);
    }
}

TEST_CASE("a skipped group gives an empty passing report") {
    const auto p = zero_parameters(Architecture::tabular(3, 1));
    TrainerConfig cfg;
    cfg.horizon = 4;
    cfg.group_size = 2;
    RolloutGroup g;
    g.prompt = {{0}, "q"};
    g.trajectories = {make_trajectory({0}, {1, 2}, p, 1), make_trajectory({0}, {2}, p, 1)};
    assign_advantages(g, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto rep = equivalence_check(p, groups, cfg);
    CHECK(rep.pass);
    CHECK(rep.groups_compared == 0);
    CHECK(rep.max_rel_diff == 0.0);
}

TEST_CASE("clip-active points exempt the clipped comparisons") {
    Rng rng = derive_rng({20});
    const auto old = random_parameters(Architecture::tabular(3, 1), 1.0, rng);
    TrainerConfig cfg;
    cfg.horizon = 6;
    cfg.group_size = 4;
    auto g = rollout_group(snapshot(old), Prompt{{0}, "q"}, 4, {1.0, {6, 2}}, rng);
    for (std::size_t i = 0; i < 4; ++i) {
        g.trajectories[i].reward = static_cast<int>(i % 2);
    }
    assign_advantages(g, cfg);
    const std::vector<RolloutGroup> groups = {g};
    auto moved = old;
    for (double& v : moved.values) {
        v += 2.0 * standard_normal(rng);
    }
    const auto rep = equivalence_check(moved, groups, cfg);
    CHECK(rep.clip_active_fraction > 0.0);
    std::size_t exempt = 0;
    for (const auto& c : rep.pairs) {
        if (c.exempt) {
            ++exempt;
            CHECK(c.lhs == "clipped-surrogate");
        }
    }
    CHECK(exempt == 3);
    CHECK(rep.pass);
}

TEST_CASE("per-token signal") {
    CHECK(per_token_signal(1.0, 10, LengthScaling::kPerResponse, 100) == doctest::Approx(0.1));
    CHECK(per_token_signal(1.0, 20, LengthScaling::kPerResponse, 100) == doctest::Approx(0.05));
    CHECK(per_token_signal(-1.0, 10, LengthScaling::kPerResponse, 100) == doctest::Approx(-0.1));
    CHECK(per_token_signal(-1.0, 20, LengthScaling::kPerResponse, 100) == doctest::Approx(-0.05));
    CHECK(per_token_signal(1.0, 10, LengthScaling::kFixedHorizon, 100) ==
          per_token_signal(1.0, 20, LengthScaling::kFixedHorizon, 100));
    for (std::size_t len = 1; len < 64; ++len) {
        CHECK(per_token_signal(1.5, len, LengthScaling::kPerResponse, 64) >
              per_token_signal(1.5, len + 1, LengthScaling::kPerResponse, 64));
        CHECK(std::abs(per_token_signal(-0.5, len + 1, LengthScaling::kPerResponse, 64)) <
              std::abs(per_token_signal(-0.5, len, LengthScaling::kPerResponse, 64)));
    }
}

TEST_CASE("length report splits by correctness and segment") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const auto p = zero_parameters(Architecture::tabular(task.vocabulary().size(), 1));
    const Token t = task.think_token();
    auto ans = task.render_answer("3*4");  // 5 tokens plus EOS
    std::vector<Token> long_think = {t, t, t, t};
    long_think.insert(long_think.end(), ans.begin(), ans.end());
    const std::vector<Trajectory> trajs = {make_trajectory({0}, ans, p, 1), make_trajectory({0}, long_think, p, 1),
                                           make_trajectory({0}, {t, t}, p, 0)};
    std::vector<ResponseSegmentation> segs;
    for (const auto& tr : trajs) {
        segs.push_back(segment(tr.response, task.markers()));
    }
    const auto rep = length_report(7, trajs, segs);
    CHECK(rep.step == 7);
    CHECK(rep.n_correct == 2);
    CHECK(rep.n_incorrect == 1);
    CHECK(*rep.mean_len_correct == doctest::Approx(ans.size() + 2.0));
    CHECK(*rep.mean_len_incorrect == doctest::Approx(2.0));
    CHECK(*rep.mean_think_correct == doctest::Approx(2.0));
    CHECK(*rep.mean_solution_correct == doctest::Approx(static_cast<double>(ans.size())));
    CHECK(*rep.mean_solution_incorrect == doctest::Approx(0.0));
    const auto empty = length_report(0, {}, {});
    CHECK_FALSE(empty.mean_len_correct.has_value());
}

TEST_CASE("finite-difference audit flags a wrong gradient") {
    auto f = [](std::span<const double> x) { return x[0] * x[0] + std::sin(x[1]); };
    const std::vector<double> x = {0.7, 0.3};
    const std::vector<double> right = {1.4, std::cos(0.3)};
    const std::vector<double> wrong = {1.4, 1.1 * std::cos(0.3)};
    Rng rng = derive_rng({1});
    CHECK(finite_difference_audit(f, right, x, 2, rng).max_relative_error < 1e-8);
    const auto bad = finite_difference_audit(f, wrong, x, 2, rng);
    CHECK(bad.max_relative_error > 0.05);
    CHECK(bad.worst_index == 1);
}

TEST_CASE("relative difference") {
    const std::vector<double> a = {1.0, -2.0};
    const std::vector<double> b = {1.0, -2.5};
    CHECK(relative_difference(a, b) == doctest::Approx(0.2));
    const std::vector<double> z = {0.0, 0.0};
    CHECK(relative_difference(z, z) == 0.0);
    const std::vector<double> tiny = {1e-18, 0.0};
    CHECK(relative_difference(tiny, z) == doctest::Approx(1.0));
    CHECK(relative_difference(tiny, z, kRelativeScaleFloor) < 1e-11);
}

TEST_CASE("cancellation scale survives opposite advantages on identical responses") {
    const auto p = zero_parameters(Architecture::tabular(2, 1));
    TrainerConfig cfg;
    cfg.horizon = 2;
    cfg.group_size = 2;
    RolloutGroup g;
    g.prompt = {{0}, "q"};
    g.trajectories = {make_trajectory({0}, {1}, p, 1), make_trajectory({0}, {1}, p, 0)};
    assign_advantages(g, cfg);
    const std::vector<RolloutGroup> groups = {g};
    const auto net = simplified_objective(groups, p, cfg);
    CHECK(std::abs(net.total) < 1e-15);
    const auto scale = cancellation_scale(p, groups, cfg);
    CHECK(scale.value == doctest::Approx(1.0));
    CHECK(scale.gradient == doctest::Approx(0.5));
}

}  // TEST_SUITE
