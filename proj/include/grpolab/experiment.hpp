#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grpolab/analysis.hpp"
#include "grpolab/config.hpp"
#include "grpolab/tasks.hpp"
#include "grpolab/trainers.hpp"

namespace grpolab {

struct Datasets {
    std::vector<Instance> train;
    std::vector<Instance> test;
};

/// Reads the configured dataset files, or generates train/test splits from `data_seed`.
Datasets load_or_generate_datasets(const TaskSection& task);

/// Fresh parameters for `seed` after the supervised warm start on format demonstrations.
PolicyParameters build_base_policy(const ExperimentConfig& config, const TaskEnvironment& task,
                                   std::span<const Instance> train, std::uint64_t seed);

struct EvaluationResult {
    double greedy_accuracy = 0.0;
    double sampled_accuracy = 0.0;
    LengthReport lengths;  // over the sampled responses
    std::vector<Trajectory> sampled;
    std::vector<ResponseSegmentation> segmentations;
    std::map<std::size_t, double> solution_log_likelihood;
};

struct EvaluationSettings {
    double temperature = 0.6;
    std::size_t samples_per_prompt = 4;
    std::size_t horizon = 16;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

/// Greedy (argmax) and sampled accuracy on `instances`. Sampling streams depend only on
/// the seed and instance position, so repeated evaluations see identical noise.
EvaluationResult evaluate(const PolicyParameters& params, const TaskEnvironment& task,
                          std::span<const Instance> instances, const EvaluationSettings& settings,
                          std::size_t step = 0);

Trajectory greedy_rollout(const PolicyParameters& params, const Prompt& prompt, EpisodeLimits limits);

// CSV layouts
std::string metrics_header();
std::string metrics_row(const IterationMetrics& m, Variant variant, std::uint64_t seed);
std::string evaluations_header();
std::string evaluations_row(std::size_t step, const std::string& variant, std::uint64_t seed,
                            const EvaluationResult& r);

struct RunOptions {
    Variant variant = Variant::kGrpo;
    std::uint64_t seed = 1;
    std::filesystem::path run_dir;
    bool resume = false;
    /// Stop after this many steps in this invocation (for interrupted-run tests); 0 = no limit.
    std::size_t max_steps_this_call = 0;
    std::ostream* log = nullptr;
};

struct RunSummary {
    Variant variant = Variant::kGrpo;
    std::uint64_t seed = 0;
    std::size_t steps_completed = 0;
    double baseline_test_accuracy = 0.0;
    double final_test_accuracy = 0.0;
    double baseline_greedy_accuracy = 0.0;
    double final_greedy_accuracy = 0.0;
    std::filesystem::path run_dir;
};

/// Full training run: warm start, baseline evaluation, iterative updates with periodic
/// evaluation and checkpoints. Writes metrics.csv, evaluations.csv, checkpoints/ and
/// summary.json under `options.run_dir`.
RunSummary run_training(const ExperimentConfig& config, const RunOptions& options);

std::filesystem::path run_directory(const ExperimentConfig& config, Variant variant, std::uint64_t seed);

struct LengthSeries {
    std::vector<std::size_t> steps;
    std::vector<std::optional<double>> mean_len_correct;
    std::vector<std::optional<double>> mean_len_incorrect;
    std::vector<std::size_t> n_correct;
    std::vector<std::size_t> n_incorrect;
    std::vector<double> sampled_accuracy;
};

/// Reads evaluations.csv in `run_dir` (missing file = no steps) and writes two-column
/// plot-data files plus length_report.json into `run_dir`/plots.
LengthSeries analyze_lengths(const std::filesystem::path& run_dir);

}  // namespace grpolab
