#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/random.hpp"
#include "grpolab/vocabulary.hpp"

namespace grpolab {

struct Prompt {
    std::vector<Token> tokens;
    std::string instance_id;
};

/// Episode boundaries: the state may never exceed `horizon` tokens in total.
struct EpisodeLimits {
    std::size_t horizon = 0;
    Token eos = 0;
};

/// Prompt plus everything generated so far. Transitions are deterministic concatenation.
class MdpState {
public:
    MdpState(Prompt prompt, EpisodeLimits limits);

    const Prompt& prompt() const noexcept { return prompt_; }
    const std::vector<Token>& suffix() const noexcept { return suffix_; }
    /// prompt ++ suffix
    std::vector<Token> tokens() const;
    std::size_t length() const noexcept { return prompt_.tokens.size() + suffix_.size(); }
    const EpisodeLimits& limits() const noexcept { return limits_; }

    bool ended_by_eos() const noexcept { return !suffix_.empty() && suffix_.back() == limits_.eos; }
    bool terminal() const noexcept { return ended_by_eos() || length() >= limits_.horizon; }

    bool operator==(const MdpState& other) const {
        return prompt_.tokens == other.prompt_.tokens && suffix_ == other.suffix_;
    }

private:
    friend MdpState step(const MdpState& state, Token action);

    Prompt prompt_;
    std::vector<Token> suffix_;
    EpisodeLimits limits_;
};

/// Appends `action`. Throws ContractViolation when `state` is already terminal.
MdpState step(const MdpState& state, Token action);

struct Trajectory {
    Prompt prompt;
    std::vector<Token> response;
    /// log pi_old(o_t | q, o_<t) recorded at sampling time, one per response token.
    std::vector<double> old_log_probs;
    std::optional<int> reward;
};

/// |o_i|: every response token counts, including the EOS that ended it.
std::size_t response_length(const Trajectory& trajectory);

struct RolloutSettings {
    double temperature = 0.6;
    EpisodeLimits limits;
};

struct RolloutGroup {
    Prompt prompt;
    std::vector<Trajectory> trajectories;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    /// One standardized advantage per trajectory; empty until computed.
    std::vector<double> advantages;
    /// Advantage shared by all reward-1 (resp. reward-0) trajectories, when the class is nonempty.
    std::optional<double> positive_advantage;
    std::optional<double> negative_advantage;
    /// Set when the group carries no learning signal and was excluded (zero reward variance).
    bool skipped = false;

    std::size_t size() const noexcept { return trajectories.size(); }
    bool has_advantages() const noexcept { return advantages.size() == trajectories.size(); }
};

Trajectory rollout(const PolicySnapshot& policy, const Prompt& prompt, const RolloutSettings& settings,
                   Rng& rng);
RolloutGroup rollout_group(const PolicySnapshot& policy, const Prompt& prompt, std::size_t group_size,
                           const RolloutSettings& settings, Rng& rng);

/// Replays a trajectory's response through `step` from its prompt.
MdpState replay(const Trajectory& trajectory, EpisodeLimits limits);

// Line-delimited JSON trajectory dumps.
void write_trajectory_record(std::ostream& out, const Trajectory& trajectory);
Trajectory parse_trajectory_record(const std::string& line);
std::vector<Trajectory> read_trajectory_records(std::istream& in);

}  // namespace grpolab
