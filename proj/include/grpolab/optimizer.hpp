#pragma once

#include <span>
#include <string>
#include <vector>

#include "grpolab/policy.hpp"

namespace grpolab {

enum class OptimizerKind { kGradientAscent, kAdam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kGradientAscent;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Gradients with a larger L2 norm are rescaled to this norm before the step; 0 disables.
    double max_grad_norm = 0.0;
};

/// Plain ascent: params + step_size * gradient. Throws NonFiniteGradient.
PolicyParameters apply_update(const PolicyParameters& params, std::span<const double> gradient,
                              double step_size);

/// Stateful ascent optimizer. Plain ascent keeps no state; Adam keeps first/second moments.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::size_t parameter_count);

    /// Moves `params` uphill along `gradient`.
    void step(PolicyParameters& params, std::span<const double> gradient, double step_size);

    const OptimizerConfig& config() const noexcept { return config_; }
    std::size_t steps_taken() const noexcept { return steps_; }
    const std::vector<double>& first_moment() const noexcept { return m_; }
    const std::vector<double>& second_moment() const noexcept { return v_; }
    void restore(std::size_t steps, std::vector<double> m, std::vector<double> v);

private:
    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

void check_finite(std::span<const double> gradient);

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

}  // namespace grpolab
