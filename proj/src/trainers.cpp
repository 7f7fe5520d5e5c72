#include "grpolab/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "grpolab/errors.hpp"
#include "grpolab/parallel.hpp"

namespace grpolab {

// ---------------------------------------------------------------------------
// Enum names

Variant parse_variant(const std::string& name) {
    if (name == "grpo") return Variant::kGrpo;
    if (name == "grpo-wo-kl") return Variant::kGrpoWoKl;
    if (name == "fisft-plus") return Variant::kFisftPlus;
    if (name == "fisft-minus") return Variant::kFisftMinus;
    if (name == "fisft-pm") return Variant::kFisftPm;
    throw ConfigError("unknown trainer variant '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::kGrpo: return "grpo";
        case Variant::kGrpoWoKl: return "grpo-wo-kl";
        case Variant::kFisftPlus: return "fisft-plus";
        case Variant::kFisftMinus: return "fisft-minus";
        case Variant::kFisftPm: return "fisft-pm";
    }
    return "unknown";
}

LengthScaling parse_length_scaling(const std::string& name) {
    if (name == "per-response") return LengthScaling::kPerResponse;
    if (name == "fixed-H") return LengthScaling::kFixedHorizon;
    throw ConfigError("unknown length_scaling '" + name + "'");
}

std::string to_string(LengthScaling s) {
    return s == LengthScaling::kPerResponse ? "per-response" : "fixed-H";
}

ZeroVarianceHandling parse_zero_variance(const std::string& name) {
    if (name == "skip") return ZeroVarianceHandling::kSkip;
    if (name == "zero-advantage") return ZeroVarianceHandling::kZeroAdvantage;
    throw ConfigError("unknown zero_variance handling '" + name + "'");
}

std::string to_string(ZeroVarianceHandling z) {
    return z == ZeroVarianceHandling::kSkip ? "skip" : "zero-advantage";
}

KlRatio parse_kl_ratio(const std::string& name) {
    if (name == "standard") return KlRatio::kStandard;
    if (name == "paper-literal") return KlRatio::kPaperLiteral;
    throw ConfigError("unknown kl_ratio '" + name + "'");
}

std::string to_string(KlRatio k) {
    return k == KlRatio::kStandard ? "standard" : "paper-literal";
}

StdKind parse_std_kind(const std::string& name) {
    if (name == "population") return StdKind::kPopulation;
    if (name == "sample") return StdKind::kSample;
    throw ConfigError("unknown std kind '" + name + "'");
}

std::string to_string(StdKind s) {
    return s == StdKind::kPopulation ? "population" : "sample";
}

FisftNormalization parse_fisft_normalization(const std::string& name) {
    if (name == "class") return FisftNormalization::kClass;
    if (name == "batch") return FisftNormalization::kBatch;
    throw ConfigError("unknown filtered-SFT normalization '" + name + "'");
}

std::string to_string(FisftNormalization n) {
    return n == FisftNormalization::kClass ? "class" : "batch";
}

void TrainerConfig::validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw ConfigError("clip_epsilon must lie in (0, 1)");
    }
    if (!(kl_beta >= 0.0)) {
        throw ConfigError("kl_beta must be nonnegative");
    }
    if (!(positive_weight >= 0.0) || !(negative_weight >= 0.0)) {
        throw ConfigError("positive/negative weights must be nonnegative");
    }
    if (group_size < 2) {
        throw ConfigError("group_size must be at least 2");
    }
    if (horizon < 2) {
        throw ConfigError("horizon must be at least 2");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("temperature must be positive");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning_rate must be positive");
    }
    if (batch_prompts == 0 || mini_batch_prompts == 0) {
        throw ConfigError("batch sizes must be positive");
    }
    if (mini_batch_prompts > batch_prompts) {
        throw ConfigError("mini_batch_size cannot exceed batch_size");
    }
    if (!(optimizer.max_grad_norm >= 0.0)) {
        throw ConfigError("max_grad_norm must be nonnegative");
    }
}

// ---------------------------------------------------------------------------
// Advantages

std::optional<double> GroupAdvantages::scaled_positive(std::size_t horizon) const {
    return positive ? std::optional<double>(*positive / static_cast<double>(horizon)) : std::nullopt;
}

std::optional<double> GroupAdvantages::scaled_negative(std::size_t horizon) const {
    return negative ? std::optional<double>(*negative / static_cast<double>(horizon)) : std::nullopt;
}

GroupAdvantages compute_advantages(std::span<const int> rewards, const TrainerConfig& config) {
    if (rewards.size() < 2) {
        throw InputError("advantage standardization needs a group of at least 2");
    }
    const double g = static_cast<double>(rewards.size());
    GroupAdvantages out;
    double sum = 0.0;
    for (int r : rewards) {
        if (r != 0 && r != 1) {
            throw InputError("rewards must be binary");
        }
        sum += r;
    }
    out.reward_mean = sum / g;
    double ss = 0.0;
    for (int r : rewards) {
        ss += (r - out.reward_mean) * (r - out.reward_mean);
    }
    const double denom = config.std_kind == StdKind::kPopulation ? g : g - 1.0;
    out.reward_std = std::sqrt(ss / denom);
    out.per_trajectory.assign(rewards.size(), 0.0);
    // Binary rewards: sigma is zero exactly when every reward is equal.
    if (sum == 0.0 || sum == g) {
        out.skipped = config.zero_variance == ZeroVarianceHandling::kSkip;
        if (sum == g) {
            out.positive = 0.0;
        } else {
            out.negative = 0.0;
        }
        return out;
    }
    const double pos = (1.0 - out.reward_mean) / out.reward_std;
    const double neg = (0.0 - out.reward_mean) / out.reward_std;
    out.positive = pos;
    out.negative = neg;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out.per_trajectory[i] = rewards[i] == 1 ? pos : neg;
    }
    return out;
}

void assign_advantages(RolloutGroup& group, const TrainerConfig& config) {
    std::vector<int> rewards;
    rewards.reserve(group.size());
    for (const auto& t : group.trajectories) {
        if (!t.reward) {
            throw ContractViolation("advantages requested before every reward was set");
        }
        rewards.push_back(*t.reward);
    }
    const auto adv = compute_advantages(rewards, config);
    group.reward_mean = adv.reward_mean;
    group.reward_std = adv.reward_std;
    group.advantages = adv.per_trajectory;
    group.skipped = adv.skipped;
    group.positive_advantage = adv.positive;
    group.negative_advantage = adv.negative;
}

// ---------------------------------------------------------------------------
// Token-level pieces

double isr(const PolicyParameters& current, const PolicySnapshot& old, const Trajectory& trajectory,
           std::size_t t) {
    if (t >= trajectory.response.size()) {
        throw InputError("position beyond the response");
    }
    std::vector<Token> ctx = trajectory.prompt.tokens;
    ctx.insert(ctx.end(), trajectory.response.begin(),
               trajectory.response.begin() + static_cast<std::ptrdiff_t>(t));
    const Token tok = trajectory.response[t];
    return std::exp(log_prob(current, ctx, tok) - log_prob(old.params(), ctx, tok));
}

double kl_penalty(double log_current, double log_other, KlRatio orientation) {
    const double log_ratio =
        orientation == KlRatio::kStandard ? log_other - log_current : log_current - log_other;
    return std::exp(log_ratio) - log_ratio - 1.0;
}

double kl_token(const PolicyParameters& current, const PolicySnapshot& other,
                const Trajectory& trajectory, std::size_t t, KlRatio orientation) {
    if (t >= trajectory.response.size()) {
        throw InputError("position beyond the response");
    }
    std::vector<Token> ctx = trajectory.prompt.tokens;
    ctx.insert(ctx.end(), trajectory.response.begin(),
               trajectory.response.begin() + static_cast<std::ptrdiff_t>(t));
    const Token tok = trajectory.response[t];
    return kl_penalty(log_prob(current, ctx, tok), log_prob(other.params(), ctx, tok), orientation);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-group accumulator; groups are reduced in index order so the result does not depend
/// on how work was scheduled across threads.
struct Partial {
    std::vector<double> grad;
    double surrogate = 0.0;
    double kl = 0.0;
    std::vector<std::vector<double>> contributions;
    std::size_t tokens = 0;
    std::size_t clipped = 0;
    double isr_min = kInf;
    double isr_max = -kInf;
    bool used = false;
};

template <typename Fn>
void for_each_token(const PolicyParameters& params, const Trajectory& traj, Fn&& fn) {
    std::vector<Token> ctx = traj.prompt.tokens;
    ctx.reserve(ctx.size() + traj.response.size());
    for (std::size_t t = 0; t < traj.response.size(); ++t) {
        const ContextEvaluation eval(params, ctx);
        fn(t, eval, traj.response[t]);
        ctx.push_back(traj.response[t]);
    }
}

double length_divisor(const Trajectory& traj, const TrainerConfig& config) {
    return config.length_scaling == LengthScaling::kPerResponse
               ? static_cast<double>(response_length(traj))
               : static_cast<double>(config.horizon);
}

void require_advantages(std::span<const RolloutGroup> groups) {
    for (const auto& g : groups) {
        for (const auto& t : g.trajectories) {
            if (!t.reward) {
                throw ContractViolation("objective evaluated on a trajectory with unset reward");
            }
            if (t.old_log_probs.size() != t.response.size()) {
                throw ContractViolation("trajectory is missing recorded old log-probabilities");
            }
        }
        if (!g.has_advantages()) {
            throw ContractViolation("objective evaluated before advantages were computed");
        }
    }
}

bool group_counts(const RolloutGroup& g, const TrainerConfig& config) {
    return !(g.skipped && config.zero_variance == ZeroVarianceHandling::kSkip);
}

template <typename PerGroup>
LossBreakdown reduce_groups(std::span<const RolloutGroup> groups, std::size_t parameter_count,
                            std::size_t threads, double kl_beta, bool use_kl, PerGroup&& per_group) {
    std::vector<Partial> parts(groups.size());
    parallel_for(groups.size(), threads, [&](std::size_t i) {
        parts[i].grad.assign(parameter_count, 0.0);
        parts[i].contributions.resize(groups[i].size());
        per_group(groups[i], parts[i]);
    });
    LossBreakdown out;
    out.gradient.assign(parameter_count, 0.0);
    double isr_min = kInf;
    double isr_max = -kInf;
    for (auto& p : parts) {
        for (auto& c : p.contributions) {
            out.token_contributions.push_back(std::move(c));
        }
        if (!p.used) {
            continue;
        }
        ++out.groups_used;
        for (std::size_t k = 0; k < parameter_count; ++k) {
            out.gradient[k] += p.grad[k];
        }
        out.surrogate += p.surrogate;
        out.kl += p.kl;
        out.tokens += p.tokens;
        out.clipped_tokens += p.clipped;
        isr_min = std::min(isr_min, p.isr_min);
        isr_max = std::max(isr_max, p.isr_max);
    }
    if (out.tokens > 0) {
        out.isr_min = isr_min;
        out.isr_max = isr_max;
    }
    if (out.groups_used > 0) {
        const double inv = 1.0 / static_cast<double>(out.groups_used);
        for (double& g : out.gradient) {
            g *= inv;
        }
        for (auto& c : out.token_contributions) {
            for (double& v : c) {
                v *= inv;
            }
        }
        out.surrogate *= inv;
        out.kl *= inv;
    }
    out.total = use_kl ? out.surrogate - kl_beta * out.kl : out.surrogate;
    return out;
}

void note_isr(Partial& p, double ratio, bool clipped) {
    ++p.tokens;
    p.clipped += clipped ? 1 : 0;
    p.isr_min = std::min(p.isr_min, ratio);
    p.isr_max = std::max(p.isr_max, ratio);
}

LossBreakdown grpo_impl(std::span<const RolloutGroup> groups, const PolicyParameters& current,
                        const PolicySnapshot* reference, const TrainerConfig& config, bool use_kl) {
    require_advantages(groups);
    const bool with_kl = use_kl && config.kl_beta > 0.0;
    if (with_kl && config.kl_ratio == KlRatio::kStandard && reference == nullptr) {
        throw ContractViolation("KL penalty requires a reference policy");
    }
    const double eps = config.clip_epsilon;
    const double beta = config.kl_beta;
    return reduce_groups(
        groups, current.size(), config.threads, beta, use_kl,
        [&](const RolloutGroup& group, Partial& part) {
            if (!group_counts(group, config)) {
                return;
            }
            part.used = true;
            const double inv_g = 1.0 / static_cast<double>(group.size());
            for (std::size_t i = 0; i < group.size(); ++i) {
                const Trajectory& traj = group.trajectories[i];
                const double adv = group.advantages[i];
                const double coeff = inv_g / length_divisor(traj, config);
                std::vector<Token> ref_ctx;
                if (with_kl && config.kl_ratio == KlRatio::kStandard) {
                    ref_ctx = traj.prompt.tokens;
                }
                auto& contrib = part.contributions[i];
                for_each_token(current, traj, [&](std::size_t t, const ContextEvaluation& eval, Token tok) {
                    const double lp = eval.log_prob(tok);
                    const double ratio = std::exp(lp - traj.old_log_probs[t]);
                    double value = ratio * adv;
                    double dvalue = ratio * adv;  // d value / d log pi
                    bool clipped = false;
                    if (config.use_clip) {
                        const double clipped_value = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
                        if (clipped_value < value) {
                            value = clipped_value;
                            dvalue = 0.0;
                            clipped = true;
                        }
                    }
                    note_isr(part, ratio, clipped);
                    double kl = 0.0;
                    double dkl = 0.0;
                    if (with_kl) {
                        if (config.kl_ratio == KlRatio::kStandard) {
                            const double lref = log_prob(reference->params(), ref_ctx, tok);
                            const double rho = std::exp(lref - lp);
                            kl = rho - (lref - lp) - 1.0;
                            dkl = 1.0 - rho;
                            ref_ctx.push_back(tok);
                        } else {
                            const double rho = ratio;
                            kl = rho - (lp - traj.old_log_probs[t]) - 1.0;
                            dkl = rho - 1.0;
                        }
                    }
                    part.surrogate += coeff * value;
                    part.kl += coeff * kl;
                    contrib.push_back(coeff * (value - (use_kl ? beta * kl : 0.0)));
                    const double w = coeff * (dvalue - (with_kl ? beta * dkl : 0.0));
                    eval.accumulate_grad_log_prob(tok, w, part.grad);
                });
            }
        });
}

}  // namespace

LossBreakdown grpo_objective(std::span<const RolloutGroup> groups, const PolicyParameters& current,
                             const PolicySnapshot& reference, const TrainerConfig& config) {
    return grpo_impl(groups, current, &reference, config, config.use_kl);
}

LossBreakdown grpo_wo_kl_objective(std::span<const RolloutGroup> groups,
                                   const PolicyParameters& current, const TrainerConfig& config) {
    return grpo_impl(groups, current, nullptr, config, false);
}

LossBreakdown simplified_objective(std::span<const RolloutGroup> groups,
                                   const PolicyParameters& current, const TrainerConfig& config,
                                   SimplifiedForm form) {
    require_advantages(groups);
    const std::size_t n = current.size();
    if (form == SimplifiedForm::kRatioSum) {
        return reduce_groups(groups, n, config.threads, 0.0, false,
                             [&](const RolloutGroup& group, Partial& part) {
            if (!group_counts(group, config)) {
                return;
            }
            part.used = true;
            const double inv_g = 1.0 / static_cast<double>(group.size());
            for (std::size_t i = 0; i < group.size(); ++i) {
                const Trajectory& traj = group.trajectories[i];
                const double weight = group.advantages[i] / length_divisor(traj, config);
                double ratio_sum = 0.0;
                auto& contrib = part.contributions[i];
                for_each_token(current, traj, [&](std::size_t t, const ContextEvaluation& eval, Token tok) {
                    const double ratio = std::exp(eval.log_prob(tok) - traj.old_log_probs[t]);
                    note_isr(part, ratio, false);
                    ratio_sum += ratio;
                    contrib.push_back(inv_g * weight * ratio);
                    eval.accumulate_grad_log_prob(tok, inv_g * weight * ratio, part.grad);
                });
                part.surrogate += inv_g * weight * ratio_sum;
            }
        });
    }

    // Class split: accumulate each class's ISR sums unweighted, then apply the shared
    // class advantage once per group.
    const bool fixed = config.length_scaling == LengthScaling::kFixedHorizon;
    return reduce_groups(groups, n, config.threads, 0.0, false,
                         [&](const RolloutGroup& group, Partial& part) {
        if (!group_counts(group, config)) {
            return;
        }
        part.used = true;
        const double inv_g = 1.0 / static_cast<double>(group.size());
        const double h = static_cast<double>(config.horizon);
        const double a_pos = group.positive_advantage.value_or(0.0);
        const double a_neg = group.negative_advantage.value_or(0.0);
        std::vector<double> grad_pos(n, 0.0);
        std::vector<double> grad_neg(n, 0.0);
        double sum_pos = 0.0;
        double sum_neg = 0.0;
        for (std::size_t i = 0; i < group.size(); ++i) {
            const Trajectory& traj = group.trajectories[i];
            const bool positive = *traj.reward == 1;
            // fixed-H: the 1/H lives in A_q; per-response: 1/|o_i| stays inside the class sum
            const double inner = fixed ? 1.0 : 1.0 / static_cast<double>(response_length(traj));
            const double outer = (positive ? a_pos : a_neg) * (fixed ? 1.0 / h : 1.0);
            auto& g = positive ? grad_pos : grad_neg;
            double& s = positive ? sum_pos : sum_neg;
            auto& contrib = part.contributions[i];
            for_each_token(current, traj, [&](std::size_t t, const ContextEvaluation& eval, Token tok) {
                const double ratio = std::exp(eval.log_prob(tok) - traj.old_log_probs[t]);
                note_isr(part, ratio, false);
                s += inner * ratio;
                contrib.push_back(inv_g * outer * inner * ratio);
                eval.accumulate_grad_log_prob(tok, inner * ratio, g);
            });
        }
        const double scaled_pos = a_pos * (fixed ? 1.0 / h : 1.0);
        const double scaled_neg = a_neg * (fixed ? 1.0 / h : 1.0);
        part.surrogate = inv_g * (scaled_pos * sum_pos + scaled_neg * sum_neg);
        for (std::size_t k = 0; k < n; ++k) {
            part.grad[k] = inv_g * (scaled_pos * grad_pos[k] + scaled_neg * grad_neg[k]);
        }
    });
}

std::vector<double> decomposed_gradient(std::span<const RolloutGroup> groups,
                                        const PolicyParameters& current, const TrainerConfig& config) {
    require_advantages(groups);
    const bool fixed = config.length_scaling == LengthScaling::kFixedHorizon;
    const double h = static_cast<double>(config.horizon);
    std::vector<double> total(current.size(), 0.0);
    std::size_t used = 0;
    for (const auto& group : groups) {
        if (!group_counts(group, config)) {
            continue;
        }
        ++used;
        const double inv_g = 1.0 / static_cast<double>(group.size());
        for (const auto& traj : group.trajectories) {
            const bool positive = *traj.reward == 1;
            const double a_hat = positive ? group.positive_advantage.value_or(0.0)
                                          : group.negative_advantage.value_or(0.0);
            const double a = a_hat / (fixed ? h : static_cast<double>(response_length(traj)));
            std::vector<Token> ctx = traj.prompt.tokens;
            for (std::size_t t = 0; t < traj.response.size(); ++t) {
                const Token tok = traj.response[t];
                const double ratio = std::exp(log_prob(current, ctx, tok) - traj.old_log_probs[t]);
                const auto score = grad_log_prob(current, ctx, tok);
                for (std::size_t k = 0; k < score.size(); ++k) {
                    total[k] += inv_g * a * ratio * score[k];
                }
                ctx.push_back(tok);
            }
        }
    }
    if (used > 0) {
        for (double& v : total) {
            v /= static_cast<double>(used);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Filtered iterative SFT

namespace {

/// sign * mean over `reward`-class trajectories of per-token mean log-likelihood.
LossBreakdown filtered_likelihood(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                                  const TrainerConfig& config, int reward, double sign) {
    std::size_t count = 0;
    std::size_t total = 0;
    for (const auto& g : groups) {
        for (const auto& t : g.trajectories) {
            if (!t.reward) {
                throw ContractViolation("filtered SFT needs verified rewards");
            }
            count += (*t.reward == reward && !t.response.empty()) ? 1 : 0;
            total += t.response.empty() ? 0 : 1;
        }
    }
    LossBreakdown out;
    out.gradient.assign(params.size(), 0.0);
    if (count == 0) {
        for (const auto& g : groups) {
            for (const auto& t : g.trajectories) {
                out.token_contributions.emplace_back(t.response.size(), 0.0);
            }
        }
        return out;
    }
    const std::size_t divisor = config.fisft_normalization == FisftNormalization::kClass ? count : total;
    const double inv_n = 1.0 / static_cast<double>(divisor);
    out = reduce_groups(groups, params.size(), config.threads, 0.0, false,
                        [&](const RolloutGroup& group, Partial& part) {
        for (std::size_t i = 0; i < group.size(); ++i) {
            const Trajectory& traj = group.trajectories[i];
            auto& contrib = part.contributions[i];
            if (*traj.reward != reward || traj.response.empty()) {
                contrib.assign(traj.response.size(), 0.0);
                continue;
            }
            part.used = true;
            const double w = sign * inv_n / length_divisor(traj, config);
            for_each_token(params, traj, [&](std::size_t, const ContextEvaluation& eval, Token tok) {
                const double lp = eval.log_prob(tok);
                ++part.tokens;
                part.surrogate += w * lp;
                contrib.push_back(w * lp);
                eval.accumulate_grad_log_prob(tok, w, part.grad);
            });
        }
    });
    // reduce_groups averaged over groups; this objective is already normalized by `divisor`.
    const double used = static_cast<double>(out.groups_used);
    for (double& g : out.gradient) {
        g *= used;
    }
    for (auto& c : out.token_contributions) {
        for (double& v : c) {
            v *= used;
        }
    }
    out.surrogate *= used;
    out.total = out.surrogate;
    out.groups_used = count;
    return out;
}

}  // namespace

LossBreakdown fisft_plus_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                              const TrainerConfig& config) {
    return filtered_likelihood(groups, params, config, 1, 1.0);
}

LossBreakdown fisft_minus_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                               const TrainerConfig& config) {
    return filtered_likelihood(groups, params, config, 0, -1.0);
}

LossBreakdown fisft_pm_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                            const TrainerConfig& config) {
    LossBreakdown plus = fisft_plus_step(groups, params, config);
    const LossBreakdown minus = fisft_minus_step(groups, params, config);
    const double wp = config.positive_weight;
    const double wn = config.negative_weight;
    LossBreakdown out = std::move(plus);
    for (std::size_t k = 0; k < out.gradient.size(); ++k) {
        out.gradient[k] = wp * out.gradient[k] + wn * minus.gradient[k];
    }
    for (std::size_t i = 0; i < out.token_contributions.size(); ++i) {
        for (std::size_t t = 0; t < out.token_contributions[i].size(); ++t) {
            out.token_contributions[i][t] =
                wp * out.token_contributions[i][t] + wn * minus.token_contributions[i][t];
        }
    }
    out.surrogate = wp * out.surrogate + wn * minus.surrogate;
    out.total = out.surrogate;
    out.tokens += minus.tokens;
    out.groups_used += minus.groups_used;
    return out;
}

LossBreakdown variant_objective(Variant variant, std::span<const RolloutGroup> groups,
                                const PolicyParameters& current, const PolicySnapshot& reference,
                                const TrainerConfig& config) {
    switch (variant) {
        case Variant::kGrpo:
            return grpo_objective(groups, current, reference, config);
        case Variant::kGrpoWoKl:
            return grpo_wo_kl_objective(groups, current, config);
        case Variant::kFisftPlus:
            return fisft_plus_step(groups, current, config);
        case Variant::kFisftMinus:
            return fisft_minus_step(groups, current, config);
        case Variant::kFisftPm:
            return fisft_pm_step(groups, current, config);
    }
    throw InputError("unknown variant");
}

// ---------------------------------------------------------------------------
// Training loop

Trainer::Trainer(Variant variant, TrainerConfig config, const TaskEnvironment& task,
                 std::vector<Instance> train_set, PolicyParameters initial, PolicySnapshot reference,
                 std::uint64_t seed)
    : variant_(variant),
      config_(std::move(config)),
      task_(&task),
      train_set_(std::move(train_set)),
      params_(std::move(initial)),
      reference_(std::move(reference)),
      optimizer_(config_.optimizer, params_.size()),
      seed_(seed) {
    config_.validate();
    if (train_set_.empty()) {
        throw InputError("training set is empty");
    }
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t step) {
    const std::size_t n = train_set_.size();
    const std::size_t b = config_.batch_prompts;
    std::vector<std::size_t> out;
    out.reserve(b);
    for (std::size_t j = 0; j < b; ++j) {
        const std::size_t k = (step - 1) * b + j;
        const std::size_t epoch = k / n;
        if (epoch != cached_epoch_) {
            permutation_.resize(n);
            std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
            Rng rng = derive_rng({seed_, epoch, 0x7065726dULL});
            for (std::size_t i = n; i > 1; --i) {
                std::swap(permutation_[i - 1], permutation_[uniform_index(rng, i)]);
            }
            cached_epoch_ = epoch;
        }
        out.push_back(permutation_[k % n]);
    }
    return out;
}

IterationMetrics Trainer::run_iteration(std::size_t step) {
    if (step == 0) {
        throw InputError("steps are 1-based");
    }
    IterationMetrics m;
    m.step = step;
    last_batch_ = batch_indices(step);
    const PolicySnapshot old = snapshot(params_);
    RolloutSettings settings;
    settings.temperature = config_.temperature;
    settings.limits = {config_.horizon, task_->vocabulary().eos()};

    std::vector<RolloutGroup> groups(last_batch_.size());
    parallel_for(groups.size(), config_.threads, [&](std::size_t j) {
        const Instance& inst = train_set_[last_batch_[j]];
        Rng rng = derive_rng({seed_, step, j, 0x726f6c6cULL});
        groups[j] = rollout_group(old, task_->encode_prompt(inst), config_.group_size, settings, rng);
        for (auto& traj : groups[j].trajectories) {
            traj.reward = task_->verify(inst, traj.response);
        }
        assign_advantages(groups[j], config_);
    });

    double len_correct = 0.0;
    double len_incorrect = 0.0;
    for (const auto& g : groups) {
        for (const auto& t : g.trajectories) {
            if (*t.reward == 1) {
                ++m.n_correct;
                len_correct += static_cast<double>(response_length(t));
            } else {
                ++m.n_incorrect;
                len_incorrect += static_cast<double>(response_length(t));
            }
        }
    }
    const std::size_t total = m.n_correct + m.n_incorrect;
    m.train_accuracy = total ? static_cast<double>(m.n_correct) / static_cast<double>(total) : 0.0;
    m.mean_len_correct = m.n_correct ? len_correct / static_cast<double>(m.n_correct) : 0.0;
    m.mean_len_incorrect = m.n_incorrect ? len_incorrect / static_cast<double>(m.n_incorrect) : 0.0;

    const std::size_t mb = config_.mini_batch_prompts;
    for (std::size_t start = 0; start < groups.size(); start += mb) {
        const std::size_t len = std::min(mb, groups.size() - start);
        const std::span<const RolloutGroup> slice(groups.data() + start, len);
        const LossBreakdown loss = variant_objective(variant_, slice, params_, reference_, config_);
        if (loss.groups_used == 0) {
            continue;
        }
        double norm = 0.0;
        for (double g : loss.gradient) {
            norm += g * g;
        }
        optimizer_.step(params_, loss.gradient, config_.learning_rate);
        ++m.updates;
        m.objective += loss.total;
        m.kl_term += loss.kl;
        m.grad_norm += std::sqrt(norm);
    }
    if (m.updates > 0) {
        const double u = static_cast<double>(m.updates);
        m.objective /= u;
        m.kl_term /= u;
        m.grad_norm /= u;
    }
    last_groups_ = std::move(groups);
    return m;
}

void train(Trainer& trainer, std::size_t first_step, std::size_t iterations,
           const std::function<void(const IterationMetrics&)>& on_step) {
    for (std::size_t s = first_step; s < first_step + iterations; ++s) {
        const IterationMetrics m = trainer.run_iteration(s);
        if (on_step) {
            on_step(m);
        }
    }
}

}  // namespace grpolab
