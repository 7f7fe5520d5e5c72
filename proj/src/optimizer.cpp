#include "grpolab/optimizer.hpp"

#include <cmath>

#include "grpolab/errors.hpp"

namespace grpolab {

namespace {

std::string describe(const std::vector<std::size_t>& indices) {
    std::string s = "non-finite gradient at index";
    s += indices.size() > 1 ? "es " : " ";
    for (std::size_t i = 0; i < indices.size() && i < 8; ++i) {
        s += (i ? "," : "") + std::to_string(indices[i]);
    }
    if (indices.size() > 8) {
        s += ",... (" + std::to_string(indices.size()) + " total)";
    }
    return s;
}

}  // namespace

NonFiniteGradient::NonFiniteGradient(std::vector<std::size_t> indices)
    : std::runtime_error(describe(indices)), indices_(std::move(indices)) {}

void check_finite(std::span<const double> gradient) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < gradient.size(); ++i) {
        if (!std::isfinite(gradient[i])) {
            bad.push_back(i);
        }
    }
    if (!bad.empty()) {
        throw NonFiniteGradient(std::move(bad));
    }
}

PolicyParameters apply_update(const PolicyParameters& params, std::span<const double> gradient,
                              double step_size) {
    PolicyParameters next = params;
    Optimizer(OptimizerConfig{}, params.size()).step(next, gradient, step_size);
    return next;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count) : config_(config) {
    if (config_.kind == OptimizerKind::kAdam) {
        m_.assign(parameter_count, 0.0);
        v_.assign(parameter_count, 0.0);
    }
}

void Optimizer::step(PolicyParameters& params, std::span<const double> gradient, double step_size) {
    if (gradient.size() != params.size()) {
        throw InputError("gradient length does not match parameter count");
    }
    check_finite(gradient);
    double scale = 1.0;
    if (config_.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (double g : gradient) {
            sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > config_.max_grad_norm) {
            scale = config_.max_grad_norm / norm;
        }
    }
    std::vector<double> next = params.values;
    std::vector<double> m = m_;
    std::vector<double> v = v_;
    if (config_.kind == OptimizerKind::kGradientAscent) {
        for (std::size_t i = 0; i < gradient.size(); ++i) {
            next[i] += step_size * scale * gradient[i];
        }
    } else {
        const double b1 = config_.beta1;
        const double b2 = config_.beta2;
        const double t = static_cast<double>(steps_ + 1);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < gradient.size(); ++i) {
            const double g = scale * gradient[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            next[i] += step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
        }
    }
    // The update is all-or-nothing: a result that overflows leaves params untouched.
    check_finite(next);
    params.values = std::move(next);
    m_ = std::move(m);
    v_ = std::move(v);
    ++steps_;
}

void Optimizer::restore(std::size_t steps, std::vector<double> m, std::vector<double> v) {
    steps_ = steps;
    if (config_.kind == OptimizerKind::kAdam) {
        if (m.size() != m_.size() || v.size() != v_.size()) {
            throw InputError("optimizer moment length mismatch");
        }
        m_ = std::move(m);
        v_ = std::move(v);
    }
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "sgd" || name == "gradient-ascent") {
        return OptimizerKind::kGradientAscent;
    }
    if (name == "adam") {
        return OptimizerKind::kAdam;
    }
    throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

}  // namespace grpolab
