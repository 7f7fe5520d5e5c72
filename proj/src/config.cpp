#include "grpolab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "grpolab/errors.hpp"

namespace grpolab {

namespace {

using nlohmann::json;

/// Reads keys out of one JSON object and rejects any key nobody asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) {
            throw ConfigError("'" + name_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown configuration key '" + name_ + "." + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute()) {
        return p;
    }
    return std::filesystem::absolute(base.empty() ? p : base / p).lexically_normal();
}

}  // namespace

Architecture PolicySection::build(std::size_t vocab_size) const {
    if (architecture == "tabular-ngram") {
        return Architecture::tabular(vocab_size, order);
    }
    if (architecture == "mlp") {
        return Architecture::mlp(vocab_size, window, order, hidden);
    }
    if (architecture == "tiny-transformer") {
        return Architecture::transformer(vocab_size, window, hidden);
    }
    throw ConfigError("unknown architecture '" + architecture + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    Section root(j, "config");

    if (const json* t = root.child("task")) {
        Section s(*t, "task");
        std::string family = to_string(c.task.generation.family);
        s.read("family", family);
        c.task.generation.family = parse_task_family(family);
        auto& g = c.task.generation;
        s.read("min_numbers", g.min_numbers);
        s.read("max_numbers", g.max_numbers);
        s.read("min_value", g.min_value);
        s.read("max_value", g.max_value);
        s.read("ops", g.ops);
        s.read("min_target", g.min_target);
        s.read("max_target", g.max_target);
        s.read("solvable", g.solvable);
        s.read("max_attempts", g.max_attempts);
        s.read("train_count", c.task.train_count);
        s.read("test_count", c.task.test_count);
        s.read("data_seed", c.task.data_seed);
        s.read("target_width", c.task.target_width);
        std::string train_file;
        std::string test_file;
        s.read("train_file", train_file);
        s.read("test_file", test_file);
        c.task.train_file = resolve(train_file, base_dir);
        c.task.test_file = resolve(test_file, base_dir);
        s.finish();
    }
    if (const json* p = root.child("policy")) {
        Section s(*p, "policy");
        s.read("architecture", c.policy.architecture);
        s.read("order", c.policy.order);
        s.read("window", c.policy.window);
        s.read("hidden", c.policy.hidden);
        s.read("init_scale", c.policy.init_scale);
        s.finish();
    }
    if (const json* w = root.child("warm_start")) {
        Section s(*w, "warm_start");
        s.read("steps", c.warm_start.steps);
        s.read("batch_size", c.warm_start.batch_size);
        s.read("learning_rate", c.warm_start.learning_rate);
        s.read("max_think", c.warm_start.max_think);
        s.read("copy_probability", c.warm_start.copy_probability);
        s.read("ops", c.warm_start.ops);
        s.finish();
    }
    if (const json* t = root.child("trainer")) {
        Section s(*t, "trainer");
        auto& tr = c.trainer;
        s.read("clip_epsilon", tr.clip_epsilon);
        s.read("kl_beta", tr.kl_beta);
        s.read("learning_rate", tr.learning_rate);
        s.read("group_size", tr.group_size);
        s.read("horizon", tr.horizon);
        s.read("positive_weight", tr.positive_weight);
        s.read("negative_weight", tr.negative_weight);
        s.read("use_kl", tr.use_kl);
        s.read("use_clip", tr.use_clip);
        s.read("temperature", tr.temperature);
        s.read("batch_size", tr.batch_prompts);
        s.read("mini_batch_size", tr.mini_batch_prompts);
        s.read("threads", tr.threads);
        std::string scaling = to_string(tr.length_scaling);
        std::string zero_var = to_string(tr.zero_variance);
        std::string kl_ratio = to_string(tr.kl_ratio);
        std::string std_kind = to_string(tr.std_kind);
        std::string fisft_norm = to_string(tr.fisft_normalization);
        std::string optimizer = to_string(tr.optimizer.kind);
        s.read("length_scaling", scaling);
        s.read("zero_variance", zero_var);
        s.read("kl_ratio", kl_ratio);
        s.read("std", std_kind);
        s.read("fisft_normalization", fisft_norm);
        s.read("optimizer", optimizer);
        s.read("adam_beta1", tr.optimizer.beta1);
        s.read("adam_beta2", tr.optimizer.beta2);
        s.read("adam_epsilon", tr.optimizer.epsilon);
        s.read("max_grad_norm", tr.optimizer.max_grad_norm);
        tr.length_scaling = parse_length_scaling(scaling);
        tr.zero_variance = parse_zero_variance(zero_var);
        tr.kl_ratio = parse_kl_ratio(kl_ratio);
        tr.std_kind = parse_std_kind(std_kind);
        tr.fisft_normalization = parse_fisft_normalization(fisft_norm);
        tr.optimizer.kind = parse_optimizer_kind(optimizer);
        s.finish();
    }
    if (const json* r = root.child("run")) {
        Section s(*r, "run");
        s.read("iterations", c.run.iterations);
        s.read("eval_every", c.run.eval_every);
        s.read("checkpoint_every", c.run.checkpoint_every);
        s.read("eval_samples_per_prompt", c.run.eval_samples_per_prompt);
        s.read("eval_temperature", c.run.eval_temperature);
        s.read("seeds", c.run.seeds);
        s.read("dump_trajectories", c.run.dump_trajectories);
        std::string out;
        s.read("output_dir", out);
        c.run.output_dir = resolve(out, base_dir);
        s.finish();
    }
    root.finish();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
    trainer.validate();
    if (run.seeds.empty()) {
        throw ConfigError("run.seeds must be nonempty");
    }
    if (task.train_count == 0 && task.train_file.empty()) {
        throw ConfigError("task.train_count must be positive");
    }
    for (const auto& f : {task.train_file, task.test_file}) {
        if (!f.empty() && !std::filesystem::exists(f)) {
            throw ConfigError("dataset file " + f.string() + " does not exist");
        }
    }
    if (warm_start.copy_probability < 0.0 || warm_start.copy_probability > 1.0) {
        throw ConfigError("warm_start.copy_probability must lie in [0, 1]");
    }
    if (run.eval_temperature <= 0.0) {
        throw ConfigError("run.eval_temperature must be positive");
    }
    policy.build(2);  // architecture name check
}

nlohmann::json ExperimentConfig::to_json() const {
    json j;
    const auto& g = task.generation;
    j["task"] = {{"family", to_string(g.family)},
                 {"min_numbers", g.min_numbers},
                 {"max_numbers", g.max_numbers},
                 {"min_value", g.min_value},
                 {"max_value", g.max_value},
                 {"ops", g.ops},
                 {"min_target", g.min_target},
                 {"max_target", g.max_target},
                 {"solvable", g.solvable},
                 {"max_attempts", g.max_attempts},
                 {"train_count", task.train_count},
                 {"test_count", task.test_count},
                 {"data_seed", task.data_seed},
                 {"target_width", task.target_width},
                 {"train_file", task.train_file.string()},
                 {"test_file", task.test_file.string()}};
    j["policy"] = {{"architecture", policy.architecture},
                   {"order", policy.order},
                   {"window", policy.window},
                   {"hidden", policy.hidden},
                   {"init_scale", policy.init_scale}};
    j["warm_start"] = {{"steps", warm_start.steps},
                       {"batch_size", warm_start.batch_size},
                       {"learning_rate", warm_start.learning_rate},
                       {"max_think", warm_start.max_think},
                       {"copy_probability", warm_start.copy_probability},
                       {"ops", warm_start.ops}};
    const auto& tr = trainer;
    j["trainer"] = {{"clip_epsilon", tr.clip_epsilon},
                    {"kl_beta", tr.kl_beta},
                    {"learning_rate", tr.learning_rate},
                    {"group_size", tr.group_size},
                    {"horizon", tr.horizon},
                    {"positive_weight", tr.positive_weight},
                    {"negative_weight", tr.negative_weight},
                    {"use_kl", tr.use_kl},
                    {"use_clip", tr.use_clip},
                    {"length_scaling", to_string(tr.length_scaling)},
                    {"zero_variance", to_string(tr.zero_variance)},
                    {"kl_ratio", to_string(tr.kl_ratio)},
                    {"std", to_string(tr.std_kind)},
                    {"fisft_normalization", to_string(tr.fisft_normalization)},
                    {"temperature", tr.temperature},
                    {"batch_size", tr.batch_prompts},
                    {"mini_batch_size", tr.mini_batch_prompts},
                    {"optimizer", to_string(tr.optimizer.kind)},
                    {"adam_beta1", tr.optimizer.beta1},
                    {"adam_beta2", tr.optimizer.beta2},
                    {"adam_epsilon", tr.optimizer.epsilon},
                    {"max_grad_norm", tr.optimizer.max_grad_norm},
                    {"threads", tr.threads}};
    j["run"] = {{"iterations", run.iterations},
                {"eval_every", run.eval_every},
                {"checkpoint_every", run.checkpoint_every},
                {"eval_samples_per_prompt", run.eval_samples_per_prompt},
                {"eval_temperature", run.eval_temperature},
                {"seeds", run.seeds},
                {"output_dir", run.output_dir.string()},
                {"dump_trajectories", run.dump_trajectories}};
    return j;
}

std::filesystem::path default_output_root() {
    if (const char* root = std::getenv("GRPOLAB_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
        return root;
    }
    return "runs";
}

}  // namespace grpolab
