#include "grpolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "grpolab/errors.hpp"

namespace grpolab {

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        r *= base;
    }
    return r;
}

// Offsets into the flat parameter vector for each architecture.
struct MlpLayout {
    std::size_t inputs, hidden, vocab;
    std::size_t w1() const { return 0; }
    std::size_t b1() const { return inputs * hidden; }
    std::size_t w2() const { return b1() + hidden; }
    std::size_t b2() const { return w2() + vocab * hidden; }
    std::size_t total() const { return b2() + vocab; }
};

MlpLayout mlp_layout(const Architecture& a) {
    return {(a.window + a.order) * a.vocab_size, a.hidden, a.vocab_size};
}

struct TransformerLayout {
    std::size_t vocab, positions, d;
    std::size_t tok() const { return 0; }
    std::size_t pos() const { return vocab * d; }
    std::size_t wq() const { return pos() + positions * d; }
    std::size_t wk() const { return wq() + d * d; }
    std::size_t wv() const { return wk() + d * d; }
    std::size_t wo() const { return wv() + d * d; }
    std::size_t out() const { return wo() + d * d; }
    std::size_t bias() const { return out() + vocab * d; }
    std::size_t total() const { return bias() + vocab; }
};

TransformerLayout transformer_layout(const Architecture& a) {
    return {a.vocab_size, a.window, a.hidden};
}

void softmax_inplace(std::span<double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (double& v : x) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : x) {
        v /= z;
    }
}

}  // namespace

Architecture Architecture::tabular(std::size_t vocab_size, std::size_t k) {
    return {ArchitectureKind::kTabularNgram, vocab_size, k, 0, 0};
}

Architecture Architecture::mlp(std::size_t vocab_size, std::size_t window, std::size_t recent,
                               std::size_t hidden) {
    return {ArchitectureKind::kMlp, vocab_size, recent, window, hidden};
}

Architecture Architecture::transformer(std::size_t vocab_size, std::size_t max_context,
                                       std::size_t width) {
    return {ArchitectureKind::kTinyTransformer, vocab_size, 0, max_context, width};
}

std::size_t Architecture::parameter_count() const {
    switch (kind) {
        case ArchitectureKind::kTabularNgram:
            // One extra "before start" symbol fills positions left of the context.
            return ipow(vocab_size + 1, order) * vocab_size;
        case ArchitectureKind::kMlp:
            return mlp_layout(*this).total();
        case ArchitectureKind::kTinyTransformer:
            return transformer_layout(*this).total();
    }
    throw InputError("unknown architecture kind");
}

std::string Architecture::tag() const {
    switch (kind) {
        case ArchitectureKind::kTabularNgram:
            return "tabular-ngram(" + std::to_string(order) + ")";
        case ArchitectureKind::kMlp:
            return "mlp(window=" + std::to_string(window) + ",recent=" + std::to_string(order) +
                   ",hidden=" + std::to_string(hidden) + ")";
        case ArchitectureKind::kTinyTransformer:
            return "tiny-transformer(context=" + std::to_string(window) +
                   ",width=" + std::to_string(hidden) + ")";
    }
    return "unknown";
}

void Architecture::check_context_length(std::size_t length) const {
    if ((kind == ArchitectureKind::kMlp || kind == ArchitectureKind::kTinyTransformer) &&
        length > window) {
        throw InputError("context of length " + std::to_string(length) +
                         " exceeds the architecture window " + std::to_string(window));
    }
}

PolicyParameters zero_parameters(const Architecture& arch) {
    if (arch.vocab_size < 2) {
        throw InputError("vocabulary size must be at least 2");
    }
    return {arch, std::vector<double>(arch.parameter_count(), 0.0)};
}

PolicyParameters random_parameters(const Architecture& arch, double scale, Rng& rng) {
    PolicyParameters p = zero_parameters(arch);
    auto fill = [&](std::size_t begin, std::size_t count, double stddev) {
        for (std::size_t i = 0; i < count; ++i) {
            p.values[begin + i] = stddev * standard_normal(rng);
        }
    };
    switch (arch.kind) {
        case ArchitectureKind::kTabularNgram:
            fill(0, p.size(), scale);
            break;
        case ArchitectureKind::kMlp: {
            const auto l = mlp_layout(arch);
            const double active = static_cast<double>(std::max<std::size_t>(1, arch.window + arch.order));
            fill(l.w1(), l.inputs * l.hidden, scale / std::sqrt(active));
            fill(l.b1(), l.hidden, 0.1 * scale);
            fill(l.w2(), l.vocab * l.hidden, scale / std::sqrt(static_cast<double>(l.hidden)));
            fill(l.b2(), l.vocab, 0.1 * scale);
            break;
        }
        case ArchitectureKind::kTinyTransformer: {
            const auto l = transformer_layout(arch);
            const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(l.d));
            fill(l.tok(), l.vocab * l.d, scale);
            fill(l.pos(), l.positions * l.d, 0.5 * scale);
            fill(l.wq(), 4 * l.d * l.d, scale * inv_sqrt_d);
            fill(l.out(), l.vocab * l.d, scale * inv_sqrt_d);
            fill(l.bias(), l.vocab, 0.1 * scale);
            break;
        }
    }
    return p;
}

PolicySnapshot snapshot(const PolicyParameters& params) {
    return PolicySnapshot(params);
}

double TokenDistribution::entropy() const {
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

Token TokenDistribution::argmax() const {
    return static_cast<Token>(std::max_element(probabilities.begin(), probabilities.end()) -
                              probabilities.begin());
}

// ---------------------------------------------------------------------------
// Forward / backward per architecture.

struct ContextEvaluation::Cache {
    // tabular
    std::size_t row = 0;
    // mlp
    std::vector<std::size_t> features;
    std::vector<double> hidden;
    // transformer: per-position embeddings, keys, values, attention weights
    std::size_t n = 0;
    std::vector<double> x, k, v, attn, q, z, h;
};

namespace {

void tabular_forward(const PolicyParameters& p, std::span<const Token> ctx,
                     ContextEvaluation::Cache& c, std::vector<double>& logits) {
    const std::size_t V = p.arch.vocab_size;
    const std::size_t k = p.arch.order;
    std::size_t key = 0;
    std::size_t radix = 1;
    // Most recent token is the least significant digit; missing positions map to symbol V.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t sym =
            i < ctx.size() ? static_cast<std::size_t>(ctx[ctx.size() - 1 - i]) : V;
        key += sym * radix;
        radix *= V + 1;
    }
    c.row = key * V;
    logits.assign(p.values.begin() + static_cast<std::ptrdiff_t>(c.row),
                  p.values.begin() + static_cast<std::ptrdiff_t>(c.row + V));
}

void tabular_backward(const PolicyParameters& p, const ContextEvaluation::Cache& c,
                      std::span<const double> dlogits, std::span<double> grad) {
    for (std::size_t v = 0; v < p.arch.vocab_size; ++v) {
        grad[c.row + v] += dlogits[v];
    }
}

void mlp_forward(const PolicyParameters& p, std::span<const Token> ctx, ContextEvaluation::Cache& c,
                 std::vector<double>& logits) {
    const auto& a = p.arch;
    const auto l = mlp_layout(a);
    const std::size_t V = a.vocab_size;
    c.features.clear();
    const std::size_t absolute = std::min(ctx.size(), a.window);
    for (std::size_t j = 0; j < absolute; ++j) {
        c.features.push_back(j * V + static_cast<std::size_t>(ctx[j]));
    }
    for (std::size_t r = 0; r < a.order && r < ctx.size(); ++r) {
        c.features.push_back((a.window + r) * V + static_cast<std::size_t>(ctx[ctx.size() - 1 - r]));
    }
    const double* w = p.values.data();
    c.hidden.assign(w + l.b1(), w + l.b1() + l.hidden);
    for (std::size_t f : c.features) {
        const double* row = w + l.w1() + f * l.hidden;
        for (std::size_t j = 0; j < l.hidden; ++j) {
            c.hidden[j] += row[j];
        }
    }
    for (double& h : c.hidden) {
        h = std::tanh(h);
    }
    logits.assign(w + l.b2(), w + l.b2() + V);
    for (std::size_t v = 0; v < V; ++v) {
        const double* row = w + l.w2() + v * l.hidden;
        double s = 0.0;
        for (std::size_t j = 0; j < l.hidden; ++j) {
            s += row[j] * c.hidden[j];
        }
        logits[v] += s;
    }
}

void mlp_backward(const PolicyParameters& p, const ContextEvaluation::Cache& c,
                  std::span<const double> dlogits, std::span<double> grad) {
    const auto l = mlp_layout(p.arch);
    const double* w = p.values.data();
    std::vector<double> dpre(l.hidden, 0.0);
    for (std::size_t v = 0; v < l.vocab; ++v) {
        const double g = dlogits[v];
        if (g == 0.0) {
            continue;
        }
        grad[l.b2() + v] += g;
        const double* row = w + l.w2() + v * l.hidden;
        double* grow = grad.data() + l.w2() + v * l.hidden;
        for (std::size_t j = 0; j < l.hidden; ++j) {
            grow[j] += g * c.hidden[j];
            dpre[j] += g * row[j];
        }
    }
    for (std::size_t j = 0; j < l.hidden; ++j) {
        dpre[j] *= 1.0 - c.hidden[j] * c.hidden[j];
        grad[l.b1() + j] += dpre[j];
    }
    for (std::size_t f : c.features) {
        double* grow = grad.data() + l.w1() + f * l.hidden;
        for (std::size_t j = 0; j < l.hidden; ++j) {
            grow[j] += dpre[j];
        }
    }
}

// y = W x for a d x d row-major block
void matvec(const double* W, const double* x, double* y, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            s += W[i * d + j] * x[j];
        }
        y[i] = s;
    }
}

// y += W^T g
void matvec_t_acc(const double* W, const double* g, double* y, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        const double gi = g[i];
        for (std::size_t j = 0; j < d; ++j) {
            y[j] += W[i * d + j] * gi;
        }
    }
}

// dW += g x^T
void outer_acc(double* dW, const double* g, const double* x, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            dW[i * d + j] += g[i] * x[j];
        }
    }
}

void transformer_forward(const PolicyParameters& p, std::span<const Token> ctx,
                         ContextEvaluation::Cache& c, std::vector<double>& logits) {
    const auto l = transformer_layout(p.arch);
    const std::size_t d = l.d;
    const std::size_t n = ctx.size();
    const double* w = p.values.data();
    c.n = n;
    c.h.assign(d, 0.0);
    if (n > 0) {
        c.x.assign(n * d, 0.0);
        c.k.assign(n * d, 0.0);
        c.v.assign(n * d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double* e = w + l.tok() + static_cast<std::size_t>(ctx[j]) * d;
            const double* pe = w + l.pos() + j * d;
            for (std::size_t i = 0; i < d; ++i) {
                c.x[j * d + i] = e[i] + pe[i];
            }
            matvec(w + l.wk(), &c.x[j * d], &c.k[j * d], d);
            matvec(w + l.wv(), &c.x[j * d], &c.v[j * d], d);
        }
        const double* last = &c.x[(n - 1) * d];
        c.q.assign(d, 0.0);
        matvec(w + l.wq(), last, c.q.data(), d);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        c.attn.assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                s += c.q[i] * c.k[j * d + i];
            }
            c.attn[j] = s * inv_sqrt_d;
        }
        softmax_inplace(c.attn);
        c.z.assign(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < d; ++i) {
                c.z[i] += c.attn[j] * c.v[j * d + i];
            }
        }
        matvec(w + l.wo(), c.z.data(), c.h.data(), d);
        for (std::size_t i = 0; i < d; ++i) {
            c.h[i] += last[i];
        }
    }
    logits.assign(w + l.bias(), w + l.bias() + l.vocab);
    for (std::size_t v = 0; v < l.vocab; ++v) {
        const double* row = w + l.out() + v * d;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            s += row[i] * c.h[i];
        }
        logits[v] += s;
    }
}

void transformer_backward(const PolicyParameters& p, std::span<const Token> ctx,
                          const ContextEvaluation::Cache& c, std::span<const double> dlogits,
                          std::span<double> grad) {
    const auto l = transformer_layout(p.arch);
    const std::size_t d = l.d;
    const std::size_t n = c.n;
    const double* w = p.values.data();
    double* g = grad.data();
    std::vector<double> dh(d, 0.0);
    for (std::size_t v = 0; v < l.vocab; ++v) {
        const double gv = dlogits[v];
        if (gv == 0.0) {
            continue;
        }
        g[l.bias() + v] += gv;
        const double* row = w + l.out() + v * d;
        double* grow = g + l.out() + v * d;
        for (std::size_t i = 0; i < d; ++i) {
            grow[i] += gv * c.h[i];
            dh[i] += gv * row[i];
        }
    }
    if (n == 0) {
        return;
    }
    std::vector<double> dx(n * d, 0.0);
    const std::size_t last = n - 1;
    for (std::size_t i = 0; i < d; ++i) {
        dx[last * d + i] += dh[i];
    }
    outer_acc(g + l.wo(), dh.data(), c.z.data(), d);
    std::vector<double> dz(d, 0.0);
    matvec_t_acc(w + l.wo(), dh.data(), dz.data(), d);

    std::vector<double> da(n, 0.0);
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            s += dz[i] * c.v[j * d + i];
        }
        da[j] = s;
        weighted += c.attn[j] * s;
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> dq(d, 0.0);
    std::vector<double> tmp(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double* xj = &c.x[j * d];
        // value path
        for (std::size_t i = 0; i < d; ++i) {
            tmp[i] = c.attn[j] * dz[i];
        }
        outer_acc(g + l.wv(), tmp.data(), xj, d);
        matvec_t_acc(w + l.wv(), tmp.data(), &dx[j * d], d);
        // score path
        const double ds = c.attn[j] * (da[j] - weighted) * inv_sqrt_d;
        for (std::size_t i = 0; i < d; ++i) {
            dq[i] += ds * c.k[j * d + i];
            tmp[i] = ds * c.q[i];
        }
        outer_acc(g + l.wk(), tmp.data(), xj, d);
        matvec_t_acc(w + l.wk(), tmp.data(), &dx[j * d], d);
    }
    outer_acc(g + l.wq(), dq.data(), &c.x[last * d], d);
    matvec_t_acc(w + l.wq(), dq.data(), &dx[last * d], d);
    for (std::size_t j = 0; j < n; ++j) {
        double* ge = g + l.tok() + static_cast<std::size_t>(ctx[j]) * d;
        double* gp = g + l.pos() + j * d;
        for (std::size_t i = 0; i < d; ++i) {
            ge[i] += dx[j * d + i];
            gp[i] += dx[j * d + i];
        }
    }
}

}  // namespace

ContextEvaluation::ContextEvaluation(const PolicyParameters& params, std::span<const Token> context)
    : params_(&params), context_(context.begin(), context.end()), cache_(std::make_unique<Cache>()) {
    const auto& a = params.arch;
    if (params.values.size() != a.parameter_count()) {
        throw InputError("parameter vector length does not match architecture " + a.tag());
    }
    a.check_context_length(context.size());
    for (Token t : context) {
        if (t < 0 || static_cast<std::size_t>(t) >= a.vocab_size) {
            throw InputError("context token " + std::to_string(t) + " is outside the vocabulary");
        }
    }
    switch (a.kind) {
        case ArchitectureKind::kTabularNgram:
            tabular_forward(params, context_, *cache_, logits_);
            break;
        case ArchitectureKind::kMlp:
            mlp_forward(params, context_, *cache_, logits_);
            break;
        case ArchitectureKind::kTinyTransformer:
            transformer_forward(params, context_, *cache_, logits_);
            break;
    }
    probs_ = logits_;
    softmax_inplace(probs_);
    const double m = *std::max_element(logits_.begin(), logits_.end());
    double z = 0.0;
    for (double v : logits_) {
        z += std::exp(v - m);
    }
    const double lse = m + std::log(z);
    log_probs_.resize(logits_.size());
    for (std::size_t i = 0; i < logits_.size(); ++i) {
        log_probs_[i] = logits_[i] - lse;
    }
}

ContextEvaluation::~ContextEvaluation() = default;
ContextEvaluation::ContextEvaluation(ContextEvaluation&&) noexcept = default;
ContextEvaluation& ContextEvaluation::operator=(ContextEvaluation&&) noexcept = default;

TokenDistribution ContextEvaluation::distribution(double temperature) const {
    if (!(temperature > 0.0)) {
        throw InputError("temperature must be positive");
    }
    TokenDistribution dist{std::vector<double>(logits_.size())};
    for (std::size_t i = 0; i < logits_.size(); ++i) {
        dist.probabilities[i] = logits_[i] / temperature;
    }
    softmax_inplace(dist.probabilities);
    return dist;
}

bool ContextEvaluation::floored(Token token) const {
    return log_probs_.at(static_cast<std::size_t>(token)) < std::log(kProbabilityFloor);
}

double ContextEvaluation::log_prob(Token token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= log_probs_.size()) {
        throw InputError("token " + std::to_string(token) + " is outside the vocabulary");
    }
    return std::max(log_probs_[static_cast<std::size_t>(token)], std::log(kProbabilityFloor));
}

void ContextEvaluation::accumulate_grad_log_prob(Token token, double weight,
                                                 std::span<double> grad) const {
    if (floored(token) || weight == 0.0) {
        return;
    }
    // d log p_t / d logit_v = [v == t] - p_v
    std::vector<double> dlogits(probs_.size());
    for (std::size_t v = 0; v < probs_.size(); ++v) {
        dlogits[v] = -weight * probs_[v];
    }
    dlogits[static_cast<std::size_t>(token)] += weight;
    accumulate_logit_grad(dlogits, grad);
}

void ContextEvaluation::accumulate_logit_grad(std::span<const double> dlogits,
                                              std::span<double> grad) const {
    if (grad.size() != params_->values.size()) {
        throw InputError("gradient buffer length does not match parameter count");
    }
    switch (params_->arch.kind) {
        case ArchitectureKind::kTabularNgram:
            tabular_backward(*params_, *cache_, dlogits, grad);
            break;
        case ArchitectureKind::kMlp:
            mlp_backward(*params_, *cache_, dlogits, grad);
            break;
        case ArchitectureKind::kTinyTransformer:
            transformer_backward(*params_, context_, *cache_, dlogits, grad);
            break;
    }
}

TokenDistribution distribution(const PolicyParameters& params, std::span<const Token> context,
                               double temperature) {
    return ContextEvaluation(params, context).distribution(temperature);
}

double log_prob(const PolicyParameters& params, std::span<const Token> context, Token token) {
    return ContextEvaluation(params, context).log_prob(token);
}

std::vector<double> grad_log_prob(const PolicyParameters& params, std::span<const Token> context,
                                  Token token) {
    ContextEvaluation eval(params, context);
    std::vector<double> grad(params.size(), 0.0);
    eval.log_prob(token);  // validates the token
    eval.accumulate_grad_log_prob(token, 1.0, grad);
    return grad;
}

Token sample_from(const TokenDistribution& dist, Rng& rng) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    const auto& p = dist.probabilities;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cumulative += p[i];
        if (u < cumulative) {
            return static_cast<Token>(i);
        }
    }
    // u landed in the rounding gap above the final partial sum
    for (std::size_t i = p.size(); i-- > 0;) {
        if (p[i] > 0.0) {
            return static_cast<Token>(i);
        }
    }
    return 0;
}

Token sample(const PolicyParameters& params, std::span<const Token> context, double temperature,
             Rng& rng) {
    return sample_from(distribution(params, context, temperature), rng);
}

}  // namespace grpolab
