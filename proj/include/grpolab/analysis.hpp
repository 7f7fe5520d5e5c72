#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpolab/mdp.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/random.hpp"
#include "grpolab/tasks.hpp"
#include "grpolab/trainers.hpp"

namespace grpolab {

inline constexpr double kIdentityTolerance = 1e-10;
inline constexpr double kFiniteDifferenceTolerance = 1e-4;
inline constexpr double kFiniteDifferenceStep = 1e-5;
/// Lower bound on the denominator of relative comparisons.
inline constexpr double kRelativeScaleFloor = 1e-6;

/// max |a - b| / max(max|a|, max|b|, floor); zero when the denominator is zero.
double relative_difference(std::span<const double> a, std::span<const double> b, double floor = 0.0);
double max_abs_difference(std::span<const double> a, std::span<const double> b);

/// Size of the ratio-sum terms before advantages of opposite sign cancel: value and max |gradient|
/// of the same form with every advantage replaced by its magnitude. Rounding in either form is
/// proportional to this, not to the (possibly exactly zero) net result.
struct CancellationScale {
    double value = 0.0;
    double gradient = 0.0;
};
CancellationScale cancellation_scale(const PolicyParameters& point, std::span<const RolloutGroup> groups,
                                     const TrainerConfig& config);

struct GradientComparison {
    std::string lhs;
    std::string rhs;
    double max_abs = 0.0;
    double max_rel = 0.0;
    /// Comparison lies outside its assumption domain (some ratio left the clip range).
    bool exempt = false;
};

struct EquivalenceReport {
    std::vector<GradientComparison> pairs;
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
    double isr_min = 1.0;
    double isr_max = 1.0;
    double clip_active_fraction = 0.0;
    double tolerance = kIdentityTolerance;
    std::size_t groups_compared = 0;
    bool pass = true;
};

/// Compares the gradients of the clipped surrogate (beta = 0), the ratio-sum form, the
/// class-split form and the score-function decomposition at `point`. Pairs involving the
/// clipped surrogate are exempt when any ratio falls outside (1 - eps, 1 + eps).
EquivalenceReport equivalence_check(const PolicyParameters& point, std::span<const RolloutGroup> groups,
                                    const TrainerConfig& config, double tolerance = kIdentityTolerance);

/// Advantage spread over the tokens of a response: A / length, or A / H in fixed-horizon mode.
double per_token_signal(double advantage, std::size_t length, LengthScaling mode, std::size_t horizon);

struct LengthReport {
    std::size_t step = 0;
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    std::optional<double> mean_len_correct;
    std::optional<double> mean_len_incorrect;
    std::optional<double> mean_think_correct;
    std::optional<double> mean_think_incorrect;
    std::optional<double> mean_solution_correct;
    std::optional<double> mean_solution_incorrect;
};

/// `segmentations[i]` belongs to `trajectories[i]`; every trajectory needs a reward.
LengthReport length_report(std::size_t step, std::span<const Trajectory> trajectories,
                           std::span<const ResponseSegmentation> segmentations);

struct FiniteDifferenceResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t probes = 0;
};

/// Central differences at `step` on `probes` randomly chosen coordinates, compared with
/// `analytic`. Relative error is |a - fd| / max(|a|, |fd|, 1e-6).
FiniteDifferenceResult finite_difference_audit(
    const std::function<double(std::span<const double>)>& objective, std::span<const double> analytic,
    std::span<const double> params, std::size_t probes, Rng& rng,
    double step = kFiniteDifferenceStep);

/// Mean per-token log-likelihood of correct responses' solution segments, keyed by think length.
std::map<std::size_t, double> solution_likelihood_by_think_length(
    const PolicyParameters& params, std::span<const Trajectory> trajectories,
    std::span<const ResponseSegmentation> segmentations);

}  // namespace grpolab
