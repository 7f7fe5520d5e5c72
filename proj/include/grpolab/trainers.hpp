#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpolab/mdp.hpp"
#include "grpolab/optimizer.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

enum class LengthScaling { kPerResponse, kFixedHorizon };
enum class ZeroVarianceHandling { kSkip, kZeroAdvantage };
/// standard: ratio = pi_ref / pi_theta against the reference policy.
/// paper-literal: ratio = pi_theta / pi_old, as the token-level formula is written.
enum class KlRatio { kStandard, kPaperLiteral };
enum class StdKind { kPopulation, kSample };
/// class: filtered likelihood averaged over the filtered trajectories only.
/// batch: summed over the filtered trajectories, divided by every trajectory in the batch.
enum class FisftNormalization { kClass, kBatch };
enum class Variant { kGrpo, kGrpoWoKl, kFisftPlus, kFisftMinus, kFisftPm };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
LengthScaling parse_length_scaling(const std::string& name);
std::string to_string(LengthScaling s);
ZeroVarianceHandling parse_zero_variance(const std::string& name);
std::string to_string(ZeroVarianceHandling z);
KlRatio parse_kl_ratio(const std::string& name);
std::string to_string(KlRatio k);
StdKind parse_std_kind(const std::string& name);
std::string to_string(StdKind s);
FisftNormalization parse_fisft_normalization(const std::string& name);
std::string to_string(FisftNormalization n);

/// Defaults are the published hyperparameters; desk-scale runs override them from config.
struct TrainerConfig {
    double clip_epsilon = 0.2;
    double kl_beta = 1e-3;
    double learning_rate = 1e-6;
    std::size_t group_size = 5;
    std::size_t horizon = 1280;
    double positive_weight = 0.5;
    double negative_weight = 0.5;
    bool use_kl = true;
    bool use_clip = true;
    LengthScaling length_scaling = LengthScaling::kPerResponse;
    ZeroVarianceHandling zero_variance = ZeroVarianceHandling::kSkip;
    KlRatio kl_ratio = KlRatio::kStandard;
    StdKind std_kind = StdKind::kPopulation;
    FisftNormalization fisft_normalization = FisftNormalization::kClass;
    double temperature = 0.6;
    std::size_t batch_prompts = 64;
    std::size_t mini_batch_prompts = 8;
    OptimizerConfig optimizer;
    std::size_t threads = 1;

    /// Throws ConfigError when an invariant is broken.
    void validate() const;
};

struct GroupAdvantages {
    std::vector<double> per_trajectory;
    std::optional<double> positive;  // shared by every reward-1 trajectory
    std::optional<double> negative;  // shared by every reward-0 trajectory
    double reward_mean = 0.0;
    double reward_std = 0.0;
    bool skipped = false;

    /// Advantage divided by the fixed horizon.
    std::optional<double> scaled_positive(std::size_t horizon) const;
    std::optional<double> scaled_negative(std::size_t horizon) const;
};

GroupAdvantages compute_advantages(std::span<const int> rewards, const TrainerConfig& config);
/// Fills the group's advantage fields from its trajectories' rewards.
/// Throws ContractViolation if any reward is unset.
void assign_advantages(RolloutGroup& group, const TrainerConfig& config);

struct LossBreakdown {
    double total = 0.0;
    double surrogate = 0.0;
    double kl = 0.0;
    /// Per trajectory (groups flattened in order), per token: that token's share of `total`.
    std::vector<std::vector<double>> token_contributions;
    std::vector<double> gradient;
    std::size_t groups_used = 0;
    std::size_t tokens = 0;
    std::size_t clipped_tokens = 0;
    double isr_min = 1.0;
    double isr_max = 1.0;
};

/// exp(log pi_current - log pi_old) at response position `t` (0-based).
double isr(const PolicyParameters& current, const PolicySnapshot& old, const Trajectory& trajectory,
           std::size_t t);
/// ratio - log(ratio) - 1 from two log-probabilities under the chosen orientation.
double kl_penalty(double log_current, double log_other, KlRatio orientation);
/// Token KL at position `t` (0-based) against `other` (the reference, or the old policy when
/// the orientation is paper-literal).
double kl_token(const PolicyParameters& current, const PolicySnapshot& other,
                const Trajectory& trajectory, std::size_t t, KlRatio orientation);

// Objectives are maximized. The old-policy probabilities come from each trajectory's
// recorded old_log_probs, i.e. the snapshot that sampled it.

/// Clipped surrogate minus beta * token KL, group-averaged.
LossBreakdown grpo_objective(std::span<const RolloutGroup> groups, const PolicyParameters& current,
                             const PolicySnapshot& reference, const TrainerConfig& config);
LossBreakdown grpo_wo_kl_objective(std::span<const RolloutGroup> groups,
                                   const PolicyParameters& current, const TrainerConfig& config);

enum class SimplifiedForm {
    /// sum_i (A_i / L_i) sum_t ISR, one trajectory at a time
    kRatioSum,
    /// A+ * (positive-class ISR sum) + A- * (negative-class ISR sum)
    kClassSplit,
};

/// Clip- and KL-free surrogate. Under fixed-horizon scaling the class-split form divides
/// each class advantage by H once; padding past EOS contributes nothing.
LossBreakdown simplified_objective(std::span<const RolloutGroup> groups,
                                   const PolicyParameters& current, const TrainerConfig& config,
                                   SimplifiedForm form = SimplifiedForm::kRatioSum);

/// Score-function assembly: A+/- weighted sums of ISR * grad log pi, built from grad_log_prob.
std::vector<double> decomposed_gradient(std::span<const RolloutGroup> groups,
                                        const PolicyParameters& current, const TrainerConfig& config);

/// Mean token log-likelihood of reward-1 trajectories (ascended).
LossBreakdown fisft_plus_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                              const TrainerConfig& config);
/// Negated mean token log-likelihood of reward-0 trajectories (ascending it lowers likelihood).
LossBreakdown fisft_minus_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                               const TrainerConfig& config);
/// positive_weight * plus + negative_weight * minus.
LossBreakdown fisft_pm_step(std::span<const RolloutGroup> groups, const PolicyParameters& params,
                            const TrainerConfig& config);

/// Dispatches on the training variant.
LossBreakdown variant_objective(Variant variant, std::span<const RolloutGroup> groups,
                                const PolicyParameters& current, const PolicySnapshot& reference,
                                const TrainerConfig& config);

// ---------------------------------------------------------------------------
// Iterative rollout -> verify -> update loop

struct IterationMetrics {
    std::size_t step = 0;
    double train_accuracy = 0.0;
    double mean_len_correct = 0.0;
    double mean_len_incorrect = 0.0;
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    double objective = 0.0;
    double kl_term = 0.0;
    double grad_norm = 0.0;
    std::size_t updates = 0;
};

class Trainer {
public:
    Trainer(Variant variant, TrainerConfig config, const TaskEnvironment& task,
            std::vector<Instance> train_set, PolicyParameters initial, PolicySnapshot reference,
            std::uint64_t seed);

    /// One outer iteration at global step `step` (1-based): sample a batch of prompts,
    /// roll out groups from a fresh old-policy snapshot, verify, then one update per mini-batch.
    /// Deterministic in (seed, step, parameters).
    IterationMetrics run_iteration(std::size_t step);

    const PolicyParameters& params() const noexcept { return params_; }
    PolicyParameters& mutable_params() noexcept { return params_; }
    Optimizer& optimizer() noexcept { return optimizer_; }
    const PolicySnapshot& reference() const noexcept { return reference_; }
    const std::vector<RolloutGroup>& last_groups() const noexcept { return last_groups_; }
    const std::vector<std::size_t>& last_batch() const noexcept { return last_batch_; }

private:
    std::vector<std::size_t> batch_indices(std::size_t step);

    Variant variant_;
    TrainerConfig config_;
    const TaskEnvironment* task_;
    std::vector<Instance> train_set_;
    PolicyParameters params_;
    PolicySnapshot reference_;
    Optimizer optimizer_;
    std::uint64_t seed_;
    std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
    std::vector<std::size_t> permutation_;
    std::vector<RolloutGroup> last_groups_;
    std::vector<std::size_t> last_batch_;
};

/// Runs steps [first_step, first_step + iterations) and reports each step's metrics.
void train(Trainer& trainer, std::size_t first_step, std::size_t iterations,
           const std::function<void(const IterationMetrics&)>& on_step);

}  // namespace grpolab
