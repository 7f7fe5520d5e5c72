#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"
#include "grpolab/trainers.hpp"

namespace grpolab {

struct TaskSection {
    GenerationConfig generation;
    std::size_t train_count = 2000;
    std::size_t test_count = 200;
    std::uint64_t data_seed = 20250601;
    std::filesystem::path train_file;  // optional; overrides generation when set
    std::filesystem::path test_file;
    std::size_t target_width = 2;
};

struct PolicySection {
    std::string architecture = "mlp";
    std::size_t order = 2;
    std::size_t window = 16;
    std::size_t hidden = 32;
    double init_scale = 1.0;

    Architecture build(std::size_t vocab_size) const;
};

/// Supervised warm start on format demonstrations, standing in for a pretrained base model.
struct WarmStartSection {
    std::size_t steps = 0;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    std::size_t max_think = 3;
    double copy_probability = 0.5;
    std::string ops = "+-*/";
};

struct RunSection {
    std::size_t iterations = 600;
    std::size_t eval_every = 10;
    std::size_t checkpoint_every = 10;
    std::size_t eval_samples_per_prompt = 4;
    double eval_temperature = 0.6;
    std::vector<std::uint64_t> seeds = {1, 2};
    std::filesystem::path output_dir;
    bool dump_trajectories = false;
};

struct ExperimentConfig {
    TaskSection task;
    PolicySection policy;
    WarmStartSection warm_start;
    TrainerConfig trainer;
    RunSection run;

    /// Throws ConfigError on unknown keys, bad values or unresolvable paths.
    static ExperimentConfig from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
};

/// Output root: GRPOLAB_OUTPUT_ROOT when set, else "runs".
std::filesystem::path default_output_root();

}  // namespace grpolab
