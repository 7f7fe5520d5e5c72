#include "grpolab/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "grpolab/analysis.hpp"
#include "grpolab/random.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Scenario {
    Architecture arch;
    std::size_t horizon = 0;
    Token eos = 0;
};

Scenario random_scenario(ArchitectureKind kind, Rng& rng) {
    const std::size_t vocab = 2 + uniform_index(rng, 5);
    const std::size_t horizon = 4 + uniform_index(rng, 5);
    Scenario s;
    s.horizon = horizon;
    s.eos = static_cast<Token>(vocab - 1);
    switch (kind) {
        case ArchitectureKind::kTabularNgram:
            s.arch = Architecture::tabular(vocab, 1 + uniform_index(rng, 2));
            break;
        case ArchitectureKind::kMlp:
            s.arch = Architecture::mlp(vocab, horizon, 1 + uniform_index(rng, 2), 3 + uniform_index(rng, 4));
            break;
        case ArchitectureKind::kTinyTransformer:
            s.arch = Architecture::transformer(vocab, horizon, 3 + uniform_index(rng, 3));
            break;
    }
    return s;
}

/// Groups sampled from `sampler` with random binary rewards; most groups mix both rewards.
std::vector<RolloutGroup> random_groups(const Scenario& s, const PolicySnapshot& sampler, std::size_t count,
                                        std::size_t group_size, const TrainerConfig& config, Rng& rng) {
    RolloutSettings settings;
    settings.temperature = uniform01(rng) < 0.5 ? 1.0 : 0.6;
    settings.limits = {s.horizon, s.eos};
    std::vector<RolloutGroup> groups;
    for (std::size_t g = 0; g < count; ++g) {
        Prompt prompt;
        const std::size_t len = 1 + uniform_index(rng, std::min<std::size_t>(3, s.horizon - 1));
        for (std::size_t i = 0; i < len; ++i) {
            // The prompt never contains EOS.
            prompt.tokens.push_back(static_cast<Token>(uniform_index(rng, s.arch.vocab_size - 1)));
        }
        prompt.instance_id = "g" + std::to_string(g);
        RolloutGroup group = rollout_group(sampler, prompt, group_size, settings, rng);
        const bool mixed = uniform01(rng) < 0.85;
        for (auto& t : group.trajectories) {
            t.reward = static_cast<int>(uniform_index(rng, 2));
        }
        if (mixed) {
            group.trajectories[0].reward = 1;
            group.trajectories[1].reward = 0;
        }
        assign_advantages(group, config);
        groups.push_back(std::move(group));
    }
    return groups;
}

PolicyParameters perturbed(const PolicyParameters& p, double scale, Rng& rng) {
    PolicyParameters out = p;
    for (double& v : out.values) {
        v += scale * standard_normal(rng);
    }
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

}  // namespace

CheckResult check_equivalence(const TrainerConfig& base, std::size_t trials, std::uint64_t seed) {
    const auto start = Clock::now();
    CheckResult r{"equivalence identity", true, "", 0.0};
    double worst = 0.0;
    std::size_t groups_total = 0;
    for (const auto kind : {ArchitectureKind::kTabularNgram, ArchitectureKind::kMlp}) {
        for (std::size_t trial = 0; trial < trials; ++trial) {
            Rng rng = derive_rng({seed, static_cast<std::uint64_t>(kind), trial});
            const Scenario s = random_scenario(kind, rng);
            TrainerConfig cfg = base;
            cfg.use_kl = false;
            cfg.kl_beta = 0.0;
            cfg.horizon = s.horizon;
            cfg.group_size = 2 + uniform_index(rng, 5);
            cfg.length_scaling = trial % 2 == 0 ? LengthScaling::kFixedHorizon : LengthScaling::kPerResponse;
            const PolicyParameters point = random_parameters(s.arch, 1.0, rng);
            const auto groups = random_groups(s, snapshot(point), 1 + uniform_index(rng, 4), cfg.group_size, cfg, rng);
            const EquivalenceReport rep = equivalence_check(point, groups, cfg);
            groups_total += groups.size();
            worst = std::max(worst, rep.max_rel_diff);
            if (!rep.pass) {
                r.passed = false;
            }
        }
    }
    r.detail = std::to_string(groups_total) + " groups, max relative difference " + format_number(worst) +
               " (tolerance " + format_number(kIdentityTolerance) + ")";
    r.seconds = seconds_since(start);
    return r;
}

CheckResult check_clip_inactive(const TrainerConfig& base, std::size_t trials, std::uint64_t seed) {
    const auto start = Clock::now();
    CheckResult r{"clip-inactive equality", true, "", 0.0};
    double worst = 0.0;
    std::size_t compared = 0;
    for (const auto kind : {ArchitectureKind::kTabularNgram, ArchitectureKind::kMlp,
                            ArchitectureKind::kTinyTransformer}) {
        for (std::size_t trial = 0; trial < trials; ++trial) {
            Rng rng = derive_rng({seed, 0x636c6970ULL, static_cast<std::uint64_t>(kind), trial});
            const Scenario s = random_scenario(kind, rng);
            TrainerConfig cfg = base;
            cfg.horizon = s.horizon;
            cfg.group_size = 2 + uniform_index(rng, 5);
            cfg.length_scaling = trial % 2 == 0 ? LengthScaling::kFixedHorizon : LengthScaling::kPerResponse;
            const PolicyParameters old = random_parameters(s.arch, 1.0, rng);
            const auto groups = random_groups(s, snapshot(old), 1 + uniform_index(rng, 3), cfg.group_size, cfg, rng);
            // Shrink the perturbation until every ratio sits strictly inside the clip range.
            double scale = 0.05;
            for (int attempt = 0; attempt < 30; ++attempt, scale *= 0.5) {
                const PolicyParameters point = perturbed(old, scale, rng);
                const LossBreakdown clipped = grpo_wo_kl_objective(groups, point, cfg);
                if (clipped.groups_used == 0) {
                    break;
                }
                if (clipped.isr_min <= 1.0 - cfg.clip_epsilon || clipped.isr_max >= 1.0 + cfg.clip_epsilon) {
                    continue;
                }
                const LossBreakdown simple = simplified_objective(groups, point, cfg, SimplifiedForm::kRatioSum);
                const CancellationScale terms = cancellation_scale(point, groups, cfg);
                const double value_rel =
                    std::abs(clipped.total - simple.total) /
                    std::max({std::abs(clipped.total), std::abs(simple.total), terms.value, kRelativeScaleFloor});
                const double grad_rel = relative_difference(clipped.gradient, simple.gradient,
                                                            std::max(terms.gradient, kRelativeScaleFloor));
                worst = std::max({worst, value_rel, grad_rel});
                if (value_rel >= kIdentityTolerance || grad_rel >= kIdentityTolerance) {
                    r.passed = false;
                }
                ++compared;
                break;
            }
        }
    }
    if (compared == 0) {
        r.passed = false;
    }
    r.detail = std::to_string(compared) + " perturbed points, max relative difference " + format_number(worst);
    r.seconds = seconds_since(start);
    return r;
}

CheckResult check_gradients(const TrainerConfig& base, std::size_t points, std::uint64_t seed) {
    const auto start = Clock::now();
    CheckResult r{"gradient audits", true, "", 0.0};
    struct Audit {
        std::string name;
        std::function<LossBreakdown(std::span<const RolloutGroup>, const PolicyParameters&,
                                    const PolicySnapshot&, const TrainerConfig&)>
            objective;
        std::function<std::vector<double>(std::span<const RolloutGroup>, const PolicyParameters&,
                                          const TrainerConfig&)>
            gradient;  // overrides objective().gradient when set
    };
    const std::vector<Audit> audits = {
        {"grpo", [](auto g, const auto& p, const auto& ref, const auto& c) { return grpo_objective(g, p, ref, c); }, {}},
        {"grpo-paper-literal-kl",
         [](auto g, const auto& p, const auto& ref, auto c) {
             c.kl_ratio = KlRatio::kPaperLiteral;
             return grpo_objective(g, p, ref, c);
         },
         {}},
        {"grpo-wo-kl", [](auto g, const auto& p, const auto&, const auto& c) { return grpo_wo_kl_objective(g, p, c); }, {}},
        {"ratio-sum",
         [](auto g, const auto& p, const auto&, const auto& c) {
             return simplified_objective(g, p, c, SimplifiedForm::kRatioSum);
         },
         {}},
        {"class-split",
         [](auto g, const auto& p, const auto&, const auto& c) {
             return simplified_objective(g, p, c, SimplifiedForm::kClassSplit);
         },
         {}},
        {"score-function",
         [](auto g, const auto& p, const auto&, const auto& c) {
             return simplified_objective(g, p, c, SimplifiedForm::kRatioSum);
         },
         [](auto g, const auto& p, const auto& c) { return decomposed_gradient(g, p, c); }},
        {"fisft-plus", [](auto g, const auto& p, const auto&, const auto& c) { return fisft_plus_step(g, p, c); }, {}},
        {"fisft-minus", [](auto g, const auto& p, const auto&, const auto& c) { return fisft_minus_step(g, p, c); }, {}},
        {"fisft-pm", [](auto g, const auto& p, const auto&, const auto& c) { return fisft_pm_step(g, p, c); }, {}},
    };

    double worst = 0.0;
    std::string worst_name;
    std::size_t audited = 0;
    for (const auto kind : {ArchitectureKind::kTabularNgram, ArchitectureKind::kMlp,
                            ArchitectureKind::kTinyTransformer}) {
        for (const auto& audit : audits) {
            for (std::size_t point = 0; point < points; ++point) {
                Rng rng = derive_rng({seed, 0x6664ULL, static_cast<std::uint64_t>(kind), audited});
                const Scenario s = random_scenario(kind, rng);
                TrainerConfig cfg = base;
                cfg.horizon = s.horizon;
                cfg.group_size = 2 + uniform_index(rng, 4);
                cfg.kl_beta = 0.05;  // large enough for the KL term to register in the audit
                cfg.length_scaling = point % 2 == 0 ? LengthScaling::kFixedHorizon : LengthScaling::kPerResponse;
                const PolicyParameters old = random_parameters(s.arch, 0.7, rng);
                const PolicySnapshot reference = snapshot(perturbed(old, 0.3, rng));
                const auto groups = random_groups(s, snapshot(old), 1 + uniform_index(rng, 3), cfg.group_size, cfg, rng);
                const PolicyParameters current = perturbed(old, 0.1, rng);

                const LossBreakdown at = audit.objective(groups, current, reference, cfg);
                const std::vector<double> analytic = audit.gradient ? audit.gradient(groups, current, cfg) : at.gradient;
                auto f = [&](std::span<const double> x) {
                    PolicyParameters p{current.arch, std::vector<double>(x.begin(), x.end())};
                    return audit.objective(groups, p, reference, cfg).total;
                };
                const std::size_t probes = std::min<std::size_t>(current.size(), 48);
                const FiniteDifferenceResult fd = finite_difference_audit(f, analytic, current.values, probes, rng);
                if (fd.max_relative_error > worst) {
                    worst = fd.max_relative_error;
                    worst_name = audit.name + " on " + s.arch.tag();
                }
                if (!(fd.max_relative_error < kFiniteDifferenceTolerance)) {
                    r.passed = false;
                }
                ++audited;
            }
        }
    }
    r.detail = std::to_string(audited) + " audits (" + std::to_string(points) +
               " points per objective and architecture), max relative error " + format_number(worst) +
               (worst_name.empty() ? "" : " (" + worst_name + ")");
    r.seconds = seconds_since(start);
    return r;
}

CheckResult check_advantages(const TrainerConfig& base) {
    const auto start = Clock::now();
    CheckResult r{"advantage properties", true, "", 0.0};
    const std::size_t g = base.group_size;
    std::size_t patterns = 0;
    std::size_t skipped = 0;
    std::ostringstream problems;
    for (std::uint64_t bits = 0; bits < (1ULL << g); ++bits, ++patterns) {
        std::vector<int> rewards(g);
        for (std::size_t i = 0; i < g; ++i) {
            rewards[i] = static_cast<int>((bits >> i) & 1U);
        }
        const GroupAdvantages adv = compute_advantages(rewards, base);
        const bool uniform = bits == 0 || bits == (1ULL << g) - 1;
        if (adv.skipped != uniform && base.zero_variance == ZeroVarianceHandling::kSkip) {
            r.passed = false;
            problems << " pattern " << bits << " skip flag wrong;";
        }
        if (adv.skipped) {
            ++skipped;
            continue;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
            sum += adv.per_trajectory[i];
            const auto& shared = rewards[i] == 1 ? adv.positive : adv.negative;
            if (!shared || adv.per_trajectory[i] != *shared) {
                r.passed = false;
                problems << " pattern " << bits << " class value not shared;";
            }
        }
        if (std::abs(sum / static_cast<double>(g)) > 1e-12) {
            r.passed = false;
            problems << " pattern " << bits << " mean " << sum / static_cast<double>(g) << ";";
        }
    }
    if (g == 5 && base.std_kind == StdKind::kPopulation) {
        const std::vector<int> rewards = {1, 1, 0, 0, 0};
        const GroupAdvantages adv = compute_advantages(rewards, base);
        // Direct oracle: mean 0.4, population std sqrt(0.24).
        const double sd = std::sqrt(0.24);
        const double pos = (1.0 - 0.4) / sd;
        const double neg = (0.0 - 0.4) / sd;
        if (!adv.positive || !adv.negative || std::abs(*adv.positive - pos) > 1e-6 ||
            std::abs(*adv.negative - neg) > 1e-6 || std::abs(*adv.positive - 1.224745) > 1e-6 ||
            std::abs(*adv.negative + 0.816497) > 1e-6) {
            r.passed = false;
            problems << " (1,1,0,0,0) values off;";
        } else {
            problems << " (1,1,0,0,0) -> " << *adv.positive << " / " << *adv.negative << ";";
        }
    }
    r.detail = std::to_string(patterns) + " patterns, " + std::to_string(skipped) + " skipped;" + problems.str();
    r.seconds = seconds_since(start);
    return r;
}

CheckResult check_length_signal(const TrainerConfig& base, std::size_t horizon) {
    const auto start = Clock::now();
    CheckResult r{"length-bias signal", true, "", 0.0};
    std::size_t comparisons = 0;
    const std::size_t g = base.group_size;
    for (std::uint64_t bits = 1; bits + 1 < (1ULL << g); ++bits) {
        std::vector<int> rewards(g);
        for (std::size_t i = 0; i < g; ++i) {
            rewards[i] = static_cast<int>((bits >> i) & 1U);
        }
        const GroupAdvantages adv = compute_advantages(rewards, base);
        for (std::size_t len = 1; len < horizon; ++len) {
            const double pos_short = per_token_signal(*adv.positive, len, LengthScaling::kPerResponse, horizon);
            const double pos_long = per_token_signal(*adv.positive, len + 1, LengthScaling::kPerResponse, horizon);
            const double neg_short = per_token_signal(*adv.negative, len, LengthScaling::kPerResponse, horizon);
            const double neg_long = per_token_signal(*adv.negative, len + 1, LengthScaling::kPerResponse, horizon);
            if (!(pos_short > pos_long) || !(std::abs(neg_long) < std::abs(neg_short))) {
                r.passed = false;
            }
            // Fixed-horizon scaling removes the dependence on length.
            if (per_token_signal(*adv.positive, len, LengthScaling::kFixedHorizon, horizon) !=
                per_token_signal(*adv.positive, len + 1, LengthScaling::kFixedHorizon, horizon)) {
                r.passed = false;
            }
            comparisons += 3;
        }
    }
    r.detail = std::to_string(comparisons) + " comparisons over lengths 1.." + std::to_string(horizon);
    r.seconds = seconds_since(start);
    return r;
}

CheckResult check_verifier(std::size_t max_numbers, std::size_t soup_responses, std::uint64_t seed) {
    const auto start = Clock::now();
    CheckResult r{"verifier soundness", true, "", 0.0};
    const TaskEnvironment task(TaskFamily::kCountdown);
    std::size_t multisets = 0;
    std::size_t candidates = 0;
    std::size_t calls = 0;
    std::size_t mismatches = 0;
    std::size_t accepted = 0;

    std::vector<int> numbers;
    const std::function<void(int)> visit = [&](int lowest) {
        if (!numbers.empty()) {
            ++multisets;
            for (const auto& c : enumerate_expressions(numbers, "+-*/")) {
                ++candidates;
                const std::vector<Token> response = task.render_answer(c.text);
                for (int target = 1; target <= 99; ++target) {
                    const Instance inst{"v", numbers, target, "test"};
                    const int expected = c.value && *c.value == target ? 1 : 0;
                    const int got = task.verify(inst, response);
                    ++calls;
                    accepted += static_cast<std::size_t>(got);
                    if (got != expected) {
                        ++mismatches;
                    }
                }
            }
        }
        if (numbers.size() == max_numbers) {
            return;
        }
        for (int v = lowest; v <= 9; ++v) {
            numbers.push_back(v);
            visit(v);
            numbers.pop_back();
        }
    };
    visit(1);

    Rng rng = derive_rng({seed, 0x736f7570ULL});
    const std::size_t vocab = task.vocabulary().size();
    std::size_t crashes = 0;
    std::size_t soup_accepted = 0;
    for (std::size_t i = 0; i < soup_responses; ++i) {
        Instance inst{"soup", {}, 1 + static_cast<int>(uniform_index(rng, 99)), "test"};
        const std::size_t n = 1 + uniform_index(rng, 3);
        for (std::size_t k = 0; k < n; ++k) {
            inst.numbers.push_back(1 + static_cast<int>(uniform_index(rng, 9)));
        }
        std::vector<Token> response(uniform_index(rng, 25));
        for (auto& t : response) {
            t = static_cast<Token>(uniform_index(rng, vocab));
        }
        if (!response.empty() && uniform01(rng) < 0.5) {
            response[uniform_index(rng, response.size())] = task.markers().open;
            response[uniform_index(rng, response.size())] = task.markers().close;
        }
        try {
            soup_accepted += static_cast<std::size_t>(task.verify(inst, response));
        } catch (...) {
            ++crashes;
        }
    }
    r.passed = mismatches == 0 && crashes == 0 && multisets > 0;
    r.detail = std::to_string(multisets) + " multisets, " + std::to_string(candidates) + " candidates, " +
               std::to_string(calls) + " checks (" + std::to_string(accepted) + " accepted), " +
               std::to_string(mismatches) + " mismatches; " + std::to_string(soup_responses) +
               " soup responses, " + std::to_string(crashes) + " crashes, " + std::to_string(soup_accepted) +
               " accepted";
    r.seconds = seconds_since(start);
    return r;
}

std::vector<CheckResult> run_invariant_battery(const ExperimentConfig& config) {
    const TrainerConfig& base = config.trainer;
    const std::uint64_t seed = config.run.seeds.front();
    return {
        check_equivalence(base, 60, seed),
        check_clip_inactive(base, 40, seed),
        check_gradients(base, 20, seed),
        check_advantages(base),
        check_length_signal(base, base.horizon),
        check_verifier(2, 20000, seed),
    };
}

}  // namespace grpolab
