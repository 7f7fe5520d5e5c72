// grpolab: dataset generation, training, evaluation, invariant checks and length analysis.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "grpolab/checkpoint.hpp"
#include "grpolab/checks.hpp"
#include "grpolab/config.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/experiment.hpp"

namespace fs = std::filesystem;
using namespace grpolab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;

int gen_data(const std::string& task_name, std::size_t count, const std::string& split,
             std::uint64_t seed, const fs::path& out, const std::string& config_path) {
    GenerationConfig gen;
    if (!config_path.empty()) {
        gen = ExperimentConfig::load(config_path).task.generation;
    }
    gen.family = parse_task_family(task_name);
    const auto instances = generate_instances(gen, count, seed, split);
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    std::ofstream os(out);
    if (!os) {
        throw ConfigError("cannot write " + out.string());
    }
    write_dataset(os, instances);
    std::cout << "wrote " << instances.size() << " " << split << " instances to " << out.string() << '\n';
    return kExitOk;
}

int train_cmd(const fs::path& config_path, const std::string& variant, std::int64_t seed,
              const fs::path& run_dir, bool resume, std::size_t max_steps) {
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    std::vector<std::uint64_t> seeds = config.run.seeds;
    if (seed >= 0) {
        seeds = {static_cast<std::uint64_t>(seed)};
    }
    for (const std::uint64_t s : seeds) {
        RunOptions options;
        options.variant = parse_variant(variant);
        options.seed = s;
        options.run_dir = (run_dir.empty() || seeds.size() > 1) ? run_directory(config, options.variant, s)
                                                                 : run_dir;
        options.resume = resume;
        options.max_steps_this_call = max_steps;
        options.log = &std::cout;
        const RunSummary r = run_training(config, options);
        std::cout << variant << " seed " << s << ": steps " << r.steps_completed << ", test accuracy "
                  << r.baseline_test_accuracy << " -> " << r.final_test_accuracy << " ("
                  << options.run_dir.string() << ")\n";
    }
    return kExitOk;
}

int eval_cmd(const fs::path& checkpoint, const fs::path& dataset, double temperature,
             std::size_t samples, fs::path config_path, std::uint64_t seed, fs::path append_to) {
    // A checkpoint inside <run>/checkpoints/ finds its run's config by default.
    const fs::path run_dir = checkpoint.parent_path().parent_path();
    if (config_path.empty() && fs::exists(run_dir / "config.json")) {
        config_path = run_dir / "config.json";
    }
    if (config_path.empty()) {
        throw ConfigError("eval needs --config (no config.json next to the checkpoint)");
    }
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    std::ifstream in(dataset);
    if (!in) {
        throw ConfigError("cannot open dataset " + dataset.string());
    }
    const auto instances = read_dataset(in);
    const PolicyParameters params = load_checkpoint(checkpoint);
    const TaskEnvironment task(config.task.generation.family, config.task.target_width);
    if (params.arch.vocab_size != task.vocabulary().size()) {
        throw ConfigError("checkpoint vocabulary does not match the task vocabulary");
    }
    EvaluationSettings settings;
    settings.temperature = temperature;
    settings.samples_per_prompt = samples;
    settings.horizon = config.trainer.horizon;
    settings.seed = seed;
    settings.threads = config.trainer.threads;
    const EvaluationResult r = evaluate(params, task, instances, settings);
    std::cout << "instances " << instances.size() << "\ngreedy_accuracy " << r.greedy_accuracy
              << "\nsampled_accuracy " << r.sampled_accuracy << '\n';

    if (append_to.empty() && fs::exists(run_dir / "config.json")) {
        append_to = run_dir / "eval_log.csv";
    }
    if (!append_to.empty()) {
        const bool fresh = !fs::exists(append_to);
        std::ofstream log(append_to, std::ios::app);
        if (fresh) {
            log << "checkpoint,dataset,temperature,samples_per_prompt,greedy_accuracy,sampled_accuracy\n";
        }
        log << checkpoint.filename().string() << ',' << dataset.string() << ',' << temperature << ','
            << samples << ',' << r.greedy_accuracy << ',' << r.sampled_accuracy << '\n';
    }
    return kExitOk;
}

int check_cmd(const fs::path& config_path) {
    ExperimentConfig config;
    if (!config_path.empty()) {
        config = ExperimentConfig::load(config_path);
    }
    const auto results = run_invariant_battery(config);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitInvariant;
}

int analyze_cmd(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) {
        throw ConfigError("run directory " + run_dir.string() + " does not exist");
    }
    const LengthSeries s = analyze_lengths(run_dir);
    std::cout << "evaluation steps " << s.steps.size() << '\n';
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
        auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("-"); };
        std::cout << "step " << s.steps[i] << " correct " << s.n_correct[i] << " (len "
                  << show(s.mean_len_correct[i]) << ") incorrect " << s.n_incorrect[i] << " (len "
                  << show(s.mean_len_incorrect[i]) << ")\n";
    }
    std::cout << "plot data written to " << (run_dir / "plots").string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GRPO / filtered iterative SFT laboratory"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a dataset split");
    std::string task_name = "countdown";
    std::size_t count = 2000;
    std::string split = "train";
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    std::string gen_config;
    gen->add_option("--task", task_name, "countdown | direct-sum")->capture_default_str();
    gen->add_option("--count", count)->capture_default_str();
    gen->add_option("--split", split)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--config", gen_config, "Take generation ranges from this config");

    auto* train = app.add_subcommand("train", "Run training");
    std::string train_config;
    std::string variant = "grpo";
    std::int64_t train_seed = -1;
    std::string run_dir;
    bool resume = false;
    std::size_t max_steps = 0;
    train->add_option("--config", train_config)->required();
    train->add_option("--variant", variant)
        ->check(CLI::IsMember({"grpo", "grpo-wo-kl", "fisft-plus", "fisft-minus", "fisft-pm"}))
        ->capture_default_str();
    train->add_option("--seed", train_seed, "Single seed (default: every seed in the config)");
    train->add_option("--run-dir", run_dir);
    train->add_flag("--resume", resume, "Continue from the run directory's last checkpoint");
    train->add_option("--max-steps", max_steps, "Stop after this many steps in this call");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string checkpoint;
    std::string dataset;
    double temperature = 0.6;
    std::size_t samples = 4;
    std::string eval_config;
    std::uint64_t eval_seed = 0;
    std::string append_to;
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--dataset", dataset)->required();
    eval->add_option("--temperature", temperature)->capture_default_str();
    eval->add_option("--samples-per-prompt", samples)->capture_default_str();
    eval->add_option("--config", eval_config);
    eval->add_option("--seed", eval_seed)->capture_default_str();
    eval->add_option("--append-to", append_to, "CSV log (default: <run>/eval_log.csv)");

    auto* check = app.add_subcommand("check", "Run the invariant battery");
    std::string check_config;
    check->add_option("--config", check_config);

    auto* analyze = app.add_subcommand("analyze-lengths", "Emit length series and plot data");
    std::string analyze_dir;
    analyze->add_option("--run-dir", analyze_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            return gen_data(task_name, count, split, gen_seed, gen_out, gen_config);
        }
        if (*train) {
            return train_cmd(train_config, variant, train_seed, run_dir, resume, max_steps);
        }
        if (*eval) {
            return eval_cmd(checkpoint, dataset, temperature, samples, eval_config, eval_seed, append_to);
        }
        if (*check) {
            return check_cmd(check_config);
        }
        if (*analyze) {
            return analyze_cmd(analyze_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvariant;
    }
    return kExitOk;
}
