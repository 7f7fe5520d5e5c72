#include "grpolab/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "grpolab/errors.hpp"

namespace grpolab {

double max_abs_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InputError("gradient lengths differ");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

double relative_difference(std::span<const double> a, std::span<const double> b, double floor) {
    const double diff = max_abs_difference(a, b);
    double scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return scale == 0.0 ? 0.0 : diff / scale;
}

CancellationScale cancellation_scale(const PolicyParameters& point, std::span<const RolloutGroup> groups,
                                     const TrainerConfig& config) {
    std::vector<RolloutGroup> magnitudes(groups.begin(), groups.end());
    for (auto& g : magnitudes) {
        for (double& a : g.advantages) {
            a = std::abs(a);
        }
        if (g.positive_advantage) {
            g.positive_advantage = std::abs(*g.positive_advantage);
        }
        if (g.negative_advantage) {
            g.negative_advantage = std::abs(*g.negative_advantage);
        }
    }
    const LossBreakdown b = simplified_objective(magnitudes, point, config, SimplifiedForm::kRatioSum);
    CancellationScale scale;
    scale.value = std::abs(b.total);
    for (double g : b.gradient) {
        scale.gradient = std::max(scale.gradient, std::abs(g));
    }
    return scale;
}

EquivalenceReport equivalence_check(const PolicyParameters& point, std::span<const RolloutGroup> groups,
                                    const TrainerConfig& config, double tolerance) {
    EquivalenceReport report;
    report.tolerance = tolerance;
    TrainerConfig cfg = config;
    cfg.kl_beta = 0.0;
    cfg.use_kl = false;
    cfg.use_clip = true;

    const LossBreakdown clipped = grpo_wo_kl_objective(groups, point, cfg);
    report.groups_compared = clipped.groups_used;
    if (clipped.groups_used == 0) {
        return report;
    }
    const LossBreakdown ratio_sum = simplified_objective(groups, point, cfg, SimplifiedForm::kRatioSum);
    const LossBreakdown class_split = simplified_objective(groups, point, cfg, SimplifiedForm::kClassSplit);
    const std::vector<double> score = decomposed_gradient(groups, point, cfg);
    const double floor = std::max(kRelativeScaleFloor, cancellation_scale(point, groups, cfg).gradient);

    const double eps = cfg.clip_epsilon;
    std::size_t outside = 0;
    std::size_t tokens = 0;
    report.isr_min = clipped.isr_min;
    report.isr_max = clipped.isr_max;
    // Count ratios outside the open clip interval, token by token.
    for (const auto& g : groups) {
        if (g.skipped && cfg.zero_variance == ZeroVarianceHandling::kSkip) {
            continue;
        }
        for (const auto& traj : g.trajectories) {
            std::vector<Token> ctx = traj.prompt.tokens;
            for (std::size_t t = 0; t < traj.response.size(); ++t) {
                const double r = std::exp(log_prob(point, ctx, traj.response[t]) - traj.old_log_probs[t]);
                ++tokens;
                outside += (r <= 1.0 - eps || r >= 1.0 + eps) ? 1 : 0;
                ctx.push_back(traj.response[t]);
            }
        }
    }
    report.clip_active_fraction = tokens ? static_cast<double>(outside) / static_cast<double>(tokens) : 0.0;
    const bool clip_active = outside > 0;

    struct Named {
        const char* name;
        const std::vector<double>* grad;
    };
    const Named grads[] = {{"clipped-surrogate", &clipped.gradient},
                           {"ratio-sum", &ratio_sum.gradient},
                           {"class-split", &class_split.gradient},
                           {"score-function", &score}};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            GradientComparison c;
            c.lhs = grads[i].name;
            c.rhs = grads[j].name;
            c.max_abs = max_abs_difference(*grads[i].grad, *grads[j].grad);
            c.max_rel = relative_difference(*grads[i].grad, *grads[j].grad, floor);
            c.exempt = clip_active && i == 0;
            if (!c.exempt) {
                report.max_abs_diff = std::max(report.max_abs_diff, c.max_abs);
                report.max_rel_diff = std::max(report.max_rel_diff, c.max_rel);
            }
            report.pairs.push_back(c);
        }
    }
    report.pass = report.max_rel_diff < tolerance;
    return report;
}

double per_token_signal(double advantage, std::size_t length, LengthScaling mode, std::size_t horizon) {
    const std::size_t denom = mode == LengthScaling::kPerResponse ? length : horizon;
    if (denom == 0) {
        throw InputError("length must be positive");
    }
    return advantage / static_cast<double>(denom);
}

LengthReport length_report(std::size_t step, std::span<const Trajectory> trajectories,
                           std::span<const ResponseSegmentation> segmentations) {
    if (trajectories.size() != segmentations.size()) {
        throw InputError("one segmentation per trajectory is required");
    }
    LengthReport r;
    r.step = step;
    double len[2] = {0, 0};
    double think[2] = {0, 0};
    double sol[2] = {0, 0};
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        if (!trajectories[i].reward) {
            throw ContractViolation("length report needs verified rewards");
        }
        const int c = *trajectories[i].reward == 1 ? 1 : 0;
        ++count[c];
        len[c] += static_cast<double>(response_length(trajectories[i]));
        think[c] += static_cast<double>(segmentations[i].think_length);
        sol[c] += static_cast<double>(segmentations[i].solution_length);
    }
    r.n_correct = count[1];
    r.n_incorrect = count[0];
    auto mean = [](double s, std::size_t n) {
        return n ? std::optional<double>(s / static_cast<double>(n)) : std::nullopt;
    };
    r.mean_len_correct = mean(len[1], count[1]);
    r.mean_len_incorrect = mean(len[0], count[0]);
    r.mean_think_correct = mean(think[1], count[1]);
    r.mean_think_incorrect = mean(think[0], count[0]);
    r.mean_solution_correct = mean(sol[1], count[1]);
    r.mean_solution_incorrect = mean(sol[0], count[0]);
    return r;
}

FiniteDifferenceResult finite_difference_audit(
    const std::function<double(std::span<const double>)>& objective, std::span<const double> analytic,
    std::span<const double> params, std::size_t probes, Rng& rng, double step) {
    if (analytic.size() != params.size()) {
        throw InputError("gradient and parameter lengths differ");
    }
    FiniteDifferenceResult result;
    std::vector<double> x(params.begin(), params.end());
    for (std::size_t p = 0; p < probes && !x.empty(); ++p) {
        const std::size_t k = uniform_index(rng, x.size());
        const double saved = x[k];
        x[k] = saved + step;
        const double up = objective(x);
        x[k] = saved - step;
        const double down = objective(x);
        x[k] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double a = analytic[k];
        const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
        ++result.probes;
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_index = k;
        }
    }
    return result;
}

std::map<std::size_t, double> solution_likelihood_by_think_length(
    const PolicyParameters& params, std::span<const Trajectory> trajectories,
    std::span<const ResponseSegmentation> segmentations) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto& traj = trajectories[i];
        const auto& seg = segmentations[i];
        if (!traj.reward || *traj.reward != 1 || seg.solution_length == 0) {
            continue;
        }
        std::vector<Token> ctx = traj.prompt.tokens;
        ctx.insert(ctx.end(), traj.response.begin(),
                   traj.response.begin() + static_cast<std::ptrdiff_t>(seg.think_length));
        double ll = 0.0;
        for (std::size_t t = seg.think_length; t < seg.total(); ++t) {
            ll += log_prob(params, ctx, traj.response[t]);
            ctx.push_back(traj.response[t]);
        }
        auto& [sum, n] = acc[seg.think_length];
        sum += ll / static_cast<double>(seg.solution_length);
        ++n;
    }
    std::map<std::size_t, double> out;
    for (const auto& [think, v] : acc) {
        out[think] = v.first / static_cast<double>(v.second);
    }
    return out;
}

}  // namespace grpolab
