#include "grpolab/mdp.hpp"

#include <istream>
#include <json.hpp>
#include <ostream>

#include "grpolab/errors.hpp"

namespace grpolab {

MdpState::MdpState(Prompt prompt, EpisodeLimits limits)
    : prompt_(std::move(prompt)), limits_(limits) {
    if (prompt_.tokens.empty()) {
        throw InputError("prompt must be nonempty");
    }
    if (prompt_.tokens.size() >= limits_.horizon) {
        throw InputError("prompt length " + std::to_string(prompt_.tokens.size()) +
                         " leaves no room under horizon " + std::to_string(limits_.horizon));
    }
}

std::vector<Token> MdpState::tokens() const {
    std::vector<Token> out = prompt_.tokens;
    out.insert(out.end(), suffix_.begin(), suffix_.end());
    return out;
}

MdpState step(const MdpState& state, Token action) {
    if (state.terminal()) {
        throw ContractViolation("step called on a terminal state");
    }
    MdpState next = state;
    next.suffix_.push_back(action);
    return next;
}

std::size_t response_length(const Trajectory& trajectory) {
    return trajectory.response.size();
}

Trajectory rollout(const PolicySnapshot& policy, const Prompt& prompt, const RolloutSettings& settings,
                   Rng& rng) {
    MdpState state(prompt, settings.limits);
    Trajectory traj;
    traj.prompt = prompt;
    std::vector<Token> context = prompt.tokens;
    while (!state.terminal()) {
        ContextEvaluation eval(policy.params(), context);
        const Token action = sample_from(eval.distribution(settings.temperature), rng);
        traj.response.push_back(action);
        traj.old_log_probs.push_back(eval.log_prob(action));
        context.push_back(action);
        state = step(state, action);
    }
    return traj;
}

RolloutGroup rollout_group(const PolicySnapshot& policy, const Prompt& prompt, std::size_t group_size,
                           const RolloutSettings& settings, Rng& rng) {
    if (group_size < 2) {
        throw InputError("group size must be at least 2");
    }
    RolloutGroup group;
    group.prompt = prompt;
    group.trajectories.reserve(group_size);
    for (std::size_t i = 0; i < group_size; ++i) {
        group.trajectories.push_back(rollout(policy, prompt, settings, rng));
    }
    return group;
}

MdpState replay(const Trajectory& trajectory, EpisodeLimits limits) {
    MdpState state(trajectory.prompt, limits);
    for (Token t : trajectory.response) {
        state = step(state, t);
    }
    return state;
}

void write_trajectory_record(std::ostream& out, const Trajectory& trajectory) {
    nlohmann::json j;
    j["instance_id"] = trajectory.prompt.instance_id;
    j["prompt"] = trajectory.prompt.tokens;
    j["response"] = trajectory.response;
    j["old_log_probs"] = trajectory.old_log_probs;
    j["reward"] = trajectory.reward ? nlohmann::json(*trajectory.reward) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
}

Trajectory parse_trajectory_record(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        Trajectory t;
        t.prompt.instance_id = j.at("instance_id").get<std::string>();
        t.prompt.tokens = j.at("prompt").get<std::vector<Token>>();
        t.response = j.at("response").get<std::vector<Token>>();
        t.old_log_probs = j.at("old_log_probs").get<std::vector<double>>();
        if (!j.at("reward").is_null()) {
            t.reward = j.at("reward").get<int>();
        }
        if (t.old_log_probs.size() != t.response.size()) {
            throw FormatError("log-probability count differs from response length");
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad trajectory record: ") + e.what());
    }
}

std::vector<Trajectory> read_trajectory_records(std::istream& in) {
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(parse_trajectory_record(line));
        }
    }
    return out;
}

}  // namespace grpolab
