#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grpolab/random.hpp"
#include "grpolab/vocabulary.hpp"

namespace grpolab {

/// Probabilities below this floor are clamped before taking logs.
inline constexpr double kProbabilityFloor = 1e-30;

enum class ArchitectureKind : std::uint32_t {
    kTabularNgram = 1,
    kMlp = 2,
    kTinyTransformer = 3,
};

/// Shape of a policy network. Field meaning depends on `kind`:
///   tabular-ngram: `order` = k (conditioning tokens).
///   mlp: `window` absolute position slots, `order` most-recent-token slots, `hidden` tanh units.
///   tiny-transformer: `window` = maximum context length, `hidden` = model width.
struct Architecture {
    ArchitectureKind kind = ArchitectureKind::kTabularNgram;
    std::size_t vocab_size = 0;
    std::size_t order = 1;
    std::size_t window = 0;
    std::size_t hidden = 0;

    static Architecture tabular(std::size_t vocab_size, std::size_t k);
    static Architecture mlp(std::size_t vocab_size, std::size_t window, std::size_t recent,
                            std::size_t hidden);
    static Architecture transformer(std::size_t vocab_size, std::size_t max_context,
                                    std::size_t width);

    std::size_t parameter_count() const;
    /// Human-readable tag, e.g. "tabular-ngram(2)".
    std::string tag() const;
    /// Throws InputError when a context of this length cannot be evaluated.
    void check_context_length(std::size_t length) const;

    bool operator==(const Architecture&) const = default;
};

struct PolicyParameters {
    Architecture arch;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

/// Zero parameters (uniform policy for every architecture).
PolicyParameters zero_parameters(const Architecture& arch);
/// Gaussian initialisation, fan-in scaled; `scale` multiplies the standard deviations.
PolicyParameters random_parameters(const Architecture& arch, double scale, Rng& rng);

/// Immutable frozen copy of a parameter state (the old or reference policy).
class PolicySnapshot {
public:
    explicit PolicySnapshot(PolicyParameters params)
        : params_(std::make_shared<const PolicyParameters>(std::move(params))) {}

    const PolicyParameters& params() const noexcept { return *params_; }
    const Architecture& arch() const noexcept { return params_->arch; }

private:
    std::shared_ptr<const PolicyParameters> params_;
};

PolicySnapshot snapshot(const PolicyParameters& params);

struct TokenDistribution {
    std::vector<double> probabilities;

    double probability(Token token) const { return probabilities.at(static_cast<std::size_t>(token)); }
    double entropy() const;
    Token argmax() const;
};

/// One forward pass at a fixed context. Retains the activations needed to
/// back-propagate any token's log-probability without recomputing the forward pass.
class ContextEvaluation {
public:
    ContextEvaluation(const PolicyParameters& params, std::span<const Token> context);
    ~ContextEvaluation();
    ContextEvaluation(ContextEvaluation&&) noexcept;
    ContextEvaluation& operator=(ContextEvaluation&&) noexcept;

    std::span<const double> logits() const noexcept { return logits_; }
    /// Temperature-1 probabilities.
    std::span<const double> probabilities() const noexcept { return probs_; }
    TokenDistribution distribution(double temperature) const;

    /// Temperature-1 log-probability, floored at log(kProbabilityFloor).
    double log_prob(Token token) const;
    /// True when `token`'s probability sits below the floor (its log-prob gradient is zero).
    bool floored(Token token) const;

    /// grad += weight * d log_prob(token) / d params.
    void accumulate_grad_log_prob(Token token, double weight, std::span<double> grad) const;
    /// grad += d/dparams of sum_v dlogits[v] * logit_v.
    void accumulate_logit_grad(std::span<const double> dlogits, std::span<double> grad) const;

    struct Cache;

private:
    const PolicyParameters* params_;
    std::vector<Token> context_;
    std::vector<double> logits_;
    std::vector<double> probs_;
    std::vector<double> log_probs_;
    std::unique_ptr<Cache> cache_;
};

TokenDistribution distribution(const PolicyParameters& params, std::span<const Token> context,
                               double temperature);
double log_prob(const PolicyParameters& params, std::span<const Token> context, Token token);
std::vector<double> grad_log_prob(const PolicyParameters& params, std::span<const Token> context,
                                  Token token);
Token sample(const PolicyParameters& params, std::span<const Token> context, double temperature,
             Rng& rng);
/// Inverse-CDF draw from an explicit distribution.
Token sample_from(const TokenDistribution& dist, Rng& rng);

}  // namespace grpolab
