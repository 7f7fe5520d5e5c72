#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grpolab/config.hpp"
#include "grpolab/trainers.hpp"

namespace grpolab {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Gradients of the four objective forms agree at the sampling point (beta = 0), for random
/// tabular and MLP policies under both length scalings.
CheckResult check_equivalence(const TrainerConfig& base, std::size_t trials, std::uint64_t seed);

/// Near the sampling point, with every ratio inside the clip range, the clipped objective
/// without KL equals the ratio-sum form in value and gradient.
CheckResult check_clip_inactive(const TrainerConfig& base, std::size_t trials, std::uint64_t seed);

/// Central finite differences against every objective's analytic gradient, all architectures.
CheckResult check_gradients(const TrainerConfig& base, std::size_t points, std::uint64_t seed);

/// Exhaustive reward patterns for the group size: zero mean, shared class values, skipping,
/// and the (1,1,0,0,0) reference values.
CheckResult check_advantages(const TrainerConfig& base);

/// Per-token signal strictly favours short correct and long incorrect responses, lengths 1..H.
CheckResult check_length_signal(const TrainerConfig& base, std::size_t horizon);

/// Verifier against the brute-force enumerator on every multiset of 1..max_numbers values
/// in 1..9 and targets 1..99, plus random token soup.
CheckResult check_verifier(std::size_t max_numbers, std::size_t soup_responses, std::uint64_t seed);

/// Everything above at battery sizes, using the config's trainer knobs.
std::vector<CheckResult> run_invariant_battery(const ExperimentConfig& config);

}  // namespace grpolab
