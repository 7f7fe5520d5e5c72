#include <doctest.h>

#include <sstream>

#include "grpolab/errors.hpp"
#include "grpolab/mdp.hpp"

using namespace grpolab;

namespace {

constexpr Token kEos = 3;

PolicyParameters random_policy(std::uint64_t seed) {
    Rng rng = derive_rng({seed});
    return random_parameters(Architecture::tabular(4, 2), 1.0, rng);
}

}  // namespace

TEST_SUITE("mdp") {

TEST_CASE("a step appends the action") {
    const MdpState s(Prompt{{0, 1}, "q"}, {8, kEos});
    const MdpState next = step(s, 2);
    CHECK(next.tokens() == std::vector<Token>{0, 1, 2});
    CHECK(next.suffix() == std::vector<Token>{2});
    CHECK_FALSE(next.terminal());
    CHECK(s.suffix().empty());
}

TEST_CASE("reaching the horizon terminates") {
    MdpState s(Prompt{{0}, "q"}, {4, kEos});
    s = step(s, 1);
    s = step(s, 1);
    CHECK(s.length() == 3);
    CHECK_FALSE(s.terminal());
    s = step(s, 2);
    CHECK(s.terminal());
    CHECK_FALSE(s.ended_by_eos());
}

TEST_CASE("EOS terminates and stepping a terminal state is a contract violation") {
    MdpState s(Prompt{{0}, "q"}, {10, kEos});
    s = step(s, 1);
    s = step(s, kEos);
    CHECK(s.terminal());
    CHECK(s.ended_by_eos());
    CHECK(s.suffix() == std::vector<Token>{1, kEos});
    CHECK_THROWS_AS(step(s, 1), ContractViolation);
}

TEST_CASE("prompts must be nonempty and shorter than the horizon") {
    CHECK_THROWS_AS(MdpState(Prompt{{}, "q"}, {4, kEos}), InputError);
    CHECK_THROWS_AS(MdpState(Prompt{{0, 1, 2, 0}, "q"}, {4, kEos}), InputError);
}

TEST_CASE("groups have the requested size and record the sampler's log-probabilities") {
    const auto p = random_policy(1);
    const PolicySnapshot snap = snapshot(p);
    Rng rng = derive_rng({2});
    const RolloutGroup g = rollout_group(snap, Prompt{{0, 1}, "q"}, 5, {0.6, {8, kEos}}, rng);
    REQUIRE(g.size() == 5);
    for (const auto& t : g.trajectories) {
        REQUIRE(t.old_log_probs.size() == t.response.size());
        CHECK(t.response.size() <= 6);
        std::vector<Token> ctx = t.prompt.tokens;
        for (std::size_t i = 0; i < t.response.size(); ++i) {
            CHECK(t.old_log_probs[i] == log_prob(p, ctx, t.response[i]));
            ctx.push_back(t.response[i]);
        }
        const MdpState end = replay(t, {8, kEos});
        CHECK(end.terminal());
        CHECK(end.suffix() == t.response);
        CHECK(response_length(t) == t.response.size());
    }
}

TEST_CASE("a deterministic policy yields identical trajectories") {
    auto p = zero_parameters(Architecture::tabular(4, 1));
    for (std::size_t row = 0; row < 5; ++row) {
        p.values[row * 4 + static_cast<std::size_t>(row % 3)] = 100.0;
    }
    Rng rng = derive_rng({3});
    const RolloutGroup g = rollout_group(snapshot(p), Prompt{{0}, "q"}, 5, {0.6, {6, kEos}}, rng);
    for (const auto& t : g.trajectories) {
        CHECK(t.response == g.trajectories[0].response);
    }
}

TEST_CASE("a fixed seed reproduces a group bit for bit") {
    const PolicySnapshot snap = snapshot(random_policy(4));
    Rng a = derive_rng({5});
    Rng b = derive_rng({5});
    const auto ga = rollout_group(snap, Prompt{{1}, "q"}, 5, {0.6, {10, kEos}}, a);
    const auto gb = rollout_group(snap, Prompt{{1}, "q"}, 5, {0.6, {10, kEos}}, b);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(ga.trajectories[i].response == gb.trajectories[i].response);
        CHECK(ga.trajectories[i].old_log_probs == gb.trajectories[i].old_log_probs);
    }
}

TEST_CASE("group size below two is rejected") {
    Rng rng = derive_rng({6});
    CHECK_THROWS_AS(rollout_group(snapshot(random_policy(6)), Prompt{{1}, "q"}, 1, {0.6, {10, kEos}}, rng),
                    InputError);
}

TEST_CASE("trajectory records round-trip") {
    Trajectory t;
    t.prompt = {{0, 2}, "inst-7"};
    t.response = {1, 1, kEos};
    t.old_log_probs = {-0.1, -2.5, -1e-3};
    t.reward = 1;
    Trajectory u = t;
    u.reward.reset();
    std::stringstream buf;
    write_trajectory_record(buf, t);
    write_trajectory_record(buf, u);
    const auto back = read_trajectory_records(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].prompt.tokens == t.prompt.tokens);
    CHECK(back[0].prompt.instance_id == "inst-7");
    CHECK(back[0].response == t.response);
    CHECK(back[0].old_log_probs == t.old_log_probs);
    CHECK(back[0].reward == 1);
    CHECK_FALSE(back[1].reward.has_value());
    CHECK_THROWS(parse_trajectory_record("{not json"));
}

}  // TEST_SUITE
