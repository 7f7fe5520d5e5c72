#include "grpolab/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "grpolab/checkpoint.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/parallel.hpp"

namespace grpolab {

namespace {

std::vector<Instance> read_dataset_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset " + path.string());
    }
    return read_dataset(in);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

/// Keeps the header and every row whose first column (the step) is <= `last_step`.
void truncate_csv(const std::filesystem::path& path, std::size_t last_step) {
    if (!std::filesystem::exists(path)) {
        return;
    }
    std::vector<std::string> kept;
    {
        std::ifstream in(path);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (header) {
                kept.push_back(line);
                header = false;
                continue;
            }
            if (line.empty()) {
                continue;
            }
            const auto cells = split_csv(line);
            if (!cells.empty() && std::stoull(cells[0]) <= last_step) {
                kept.push_back(line);
            }
        }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : kept) {
        out << l << '\n';
    }
}

std::ofstream open_csv(const std::filesystem::path& path, const std::string& header) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw ConfigError("cannot open " + path.string() + " for writing");
    }
    if (fresh) {
        out << header << '\n';
    }
    return out;
}

std::string step_name(std::size_t step) {
    std::ostringstream os;
    os << "step_" << std::setw(6) << std::setfill('0') << step << ".bin";
    return os.str();
}

/// Format demonstration: think filler, then an answer that copies the prompt numbers with
/// probability `copy_probability` and otherwise uses random numbers, with random operators.
std::vector<Token> demonstration(const TaskEnvironment& task, const Instance& inst,
                                 const ExperimentConfig& config, std::size_t max_response, Rng& rng) {
    const auto& ws = config.warm_start;
    const auto& gen = config.task.generation;
    std::string body;
    const bool copy = uniform01(rng) < ws.copy_probability;
    if (task.family() == TaskFamily::kDirectSum) {
        const int value = copy ? inst.target
                               : gen.min_target + static_cast<int>(uniform_index(
                                                      rng, static_cast<std::uint64_t>(gen.max_target - gen.min_target + 1)));
        body = std::to_string(value);
    } else {
        std::vector<int> operands = inst.numbers;
        if (copy) {
            for (std::size_t i = operands.size(); i > 1; --i) {
                std::swap(operands[i - 1], operands[uniform_index(rng, i)]);
            }
        } else {
            for (int& v : operands) {
                v = gen.min_value + static_cast<int>(uniform_index(
                                        rng, static_cast<std::uint64_t>(gen.max_value - gen.min_value + 1)));
            }
        }
        const std::string& ops = ws.ops.empty() ? gen.ops : ws.ops;
        for (std::size_t i = 0; i < operands.size(); ++i) {
            if (i > 0) {
                body += ops[uniform_index(rng, ops.size())];
            }
            body += std::to_string(operands[i]);
        }
    }
    std::vector<Token> answer = task.render_answer(body);
    std::size_t think = uniform_index(rng, ws.max_think + 1);
    if (answer.size() + think > max_response) {
        think = max_response > answer.size() ? max_response - answer.size() : 0;
    }
    std::vector<Token> out(think, task.think_token());
    out.insert(out.end(), answer.begin(), answer.end());
    return out;
}

}  // namespace

Datasets load_or_generate_datasets(const TaskSection& task) {
    Datasets d;
    if (!task.train_file.empty()) {
        d.train = read_dataset_file(task.train_file);
    } else {
        d.train = generate_instances(task.generation, task.train_count, task.data_seed, "train");
    }
    if (!task.test_file.empty()) {
        d.test = read_dataset_file(task.test_file);
    } else if (task.test_count > 0) {
        d.test = generate_instances(task.generation, task.test_count, task.data_seed + 1, "test");
    }
    return d;
}

PolicyParameters build_base_policy(const ExperimentConfig& config, const TaskEnvironment& task,
                                   std::span<const Instance> train, std::uint64_t seed) {
    const Architecture arch = config.policy.build(task.vocabulary().size());
    Rng init_rng = derive_rng({seed, 0x696e6974ULL});
    PolicyParameters params = config.policy.init_scale > 0.0
                                  ? random_parameters(arch, config.policy.init_scale, init_rng)
                                  : zero_parameters(arch);
    const auto& ws = config.warm_start;
    if (ws.steps == 0 || train.empty()) {
        return params;
    }
    TrainerConfig sft = config.trainer;
    sft.length_scaling = LengthScaling::kPerResponse;
    Optimizer opt(OptimizerConfig{OptimizerKind::kAdam, 0.9, 0.999, 1e-8}, params.size());
    for (std::size_t step = 1; step <= ws.steps; ++step) {
        Rng rng = derive_rng({seed, step, 0x7761726dULL});
        std::vector<RolloutGroup> batch(1);
        for (std::size_t b = 0; b < ws.batch_size; ++b) {
            const Instance& inst = train[uniform_index(rng, train.size())];
            Trajectory traj;
            traj.prompt = task.encode_prompt(inst);
            const std::size_t room = config.trainer.horizon - traj.prompt.tokens.size();
            traj.response = demonstration(task, inst, config, room, rng);
            traj.old_log_probs.assign(traj.response.size(), 0.0);
            traj.reward = 1;
            batch[0].prompt = traj.prompt;
            batch[0].trajectories.push_back(std::move(traj));
        }
        const LossBreakdown loss = fisft_plus_step(batch, params, sft);
        opt.step(params, loss.gradient, ws.learning_rate);
    }
    return params;
}

Trajectory greedy_rollout(const PolicyParameters& params, const Prompt& prompt, EpisodeLimits limits) {
    MdpState state(prompt, limits);
    Trajectory traj;
    traj.prompt = prompt;
    std::vector<Token> ctx = prompt.tokens;
    while (!state.terminal()) {
        const ContextEvaluation eval(params, ctx);
        const auto probs = eval.probabilities();
        const auto tok = static_cast<Token>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        traj.response.push_back(tok);
        traj.old_log_probs.push_back(eval.log_prob(tok));
        ctx.push_back(tok);
        state = step(state, tok);
    }
    return traj;
}

EvaluationResult evaluate(const PolicyParameters& params, const TaskEnvironment& task,
                          std::span<const Instance> instances, const EvaluationSettings& settings,
                          std::size_t step) {
    EvaluationResult r;
    const std::size_t n = instances.size();
    const std::size_t k = settings.samples_per_prompt;
    const PolicySnapshot snap = snapshot(params);
    RolloutSettings rs;
    rs.temperature = settings.temperature;
    rs.limits = {settings.horizon, task.vocabulary().eos()};
    std::vector<int> greedy(n, 0);
    r.sampled.resize(n * k);
    parallel_for(n, settings.threads, [&](std::size_t i) {
        const Prompt prompt = task.encode_prompt(instances[i]);
        const Trajectory g = greedy_rollout(params, prompt, rs.limits);
        greedy[i] = task.verify(instances[i], g.response);
        for (std::size_t s = 0; s < k; ++s) {
            Rng rng = derive_rng({settings.seed, i, s, 0x6576616cULL});
            Trajectory t = rollout(snap, prompt, rs, rng);
            t.reward = task.verify(instances[i], t.response);
            r.sampled[i * k + s] = std::move(t);
        }
    });
    std::size_t greedy_correct = 0;
    for (int g : greedy) {
        greedy_correct += static_cast<std::size_t>(g);
    }
    r.greedy_accuracy = n ? static_cast<double>(greedy_correct) / static_cast<double>(n) : 0.0;
    r.segmentations.reserve(r.sampled.size());
    for (const auto& t : r.sampled) {
        r.segmentations.push_back(segment(t.response, task.markers()));
    }
    r.lengths = length_report(step, r.sampled, r.segmentations);
    const std::size_t total = r.lengths.n_correct + r.lengths.n_incorrect;
    r.sampled_accuracy = total ? static_cast<double>(r.lengths.n_correct) / static_cast<double>(total) : 0.0;
    r.solution_log_likelihood = solution_likelihood_by_think_length(params, r.sampled, r.segmentations);
    return r;
}

std::string metrics_header() {
    return "step,variant,train_accuracy,mean_len_correct,mean_len_incorrect,n_correct,n_incorrect,"
           "objective,kl_term,grad_norm,seed";
}

std::string metrics_row(const IterationMetrics& m, Variant variant, std::uint64_t seed) {
    std::ostringstream os;
    os << m.step << ',' << to_string(variant) << ',' << fmt(m.train_accuracy) << ','
       << fmt(m.mean_len_correct) << ',' << fmt(m.mean_len_incorrect) << ',' << m.n_correct << ','
       << m.n_incorrect << ',' << fmt(m.objective) << ',' << fmt(m.kl_term) << ',' << fmt(m.grad_norm)
       << ',' << seed;
    return os.str();
}

std::string evaluations_header() {
    return "step,variant,seed,greedy_accuracy,sampled_accuracy,n_correct,n_incorrect,"
           "mean_len_correct,mean_len_incorrect,mean_think_correct,mean_think_incorrect,"
           "mean_solution_correct,mean_solution_incorrect";
}

std::string evaluations_row(std::size_t step, const std::string& variant, std::uint64_t seed,
                            const EvaluationResult& r) {
    const auto& l = r.lengths;
    std::ostringstream os;
    os << step << ',' << variant << ',' << seed << ',' << fmt(r.greedy_accuracy) << ','
       << fmt(r.sampled_accuracy) << ',' << l.n_correct << ',' << l.n_incorrect << ','
       << fmt(l.mean_len_correct) << ',' << fmt(l.mean_len_incorrect) << ','
       << fmt(l.mean_think_correct) << ',' << fmt(l.mean_think_incorrect) << ','
       << fmt(l.mean_solution_correct) << ',' << fmt(l.mean_solution_incorrect);
    return os.str();
}

std::filesystem::path run_directory(const ExperimentConfig& config, Variant variant, std::uint64_t seed) {
    const auto root = config.run.output_dir.empty() ? default_output_root() : config.run.output_dir;
    return root / (to_string(variant) + "-seed" + std::to_string(seed));
}

RunSummary run_training(const ExperimentConfig& config, const RunOptions& options) {
    namespace fs = std::filesystem;
    const fs::path dir = options.run_dir.empty() ? run_directory(config, options.variant, options.seed)
                                                 : options.run_dir;
    const fs::path ckpt_dir = dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    const fs::path state_path = dir / "state.json";
    const fs::path metrics_path = dir / "metrics.csv";
    const fs::path evals_path = dir / "evaluations.csv";

    const TaskEnvironment task(config.task.generation.family, config.task.target_width);
    const Datasets data = load_or_generate_datasets(config.task);
    const std::string variant_name = to_string(options.variant);

    EvaluationSettings eval_settings;
    eval_settings.temperature = config.run.eval_temperature;
    eval_settings.samples_per_prompt = config.run.eval_samples_per_prompt;
    eval_settings.horizon = config.trainer.horizon;
    eval_settings.seed = options.seed;
    eval_settings.threads = config.trainer.threads;

    RunSummary summary;
    summary.variant = options.variant;
    summary.seed = options.seed;
    summary.run_dir = dir;

    std::size_t last_step = 0;
    PolicyParameters base;
    PolicyParameters current;
    std::optional<nlohmann::json> state;
    if (options.resume && fs::exists(state_path)) {
        std::ifstream in(state_path);
        state = nlohmann::json::parse(in);
        last_step = state->at("step").get<std::size_t>();
        base = load_checkpoint(ckpt_dir / "base.bin");
        current = load_checkpoint(dir / state->at("checkpoint").get<std::string>());
        truncate_csv(metrics_path, last_step);
        truncate_csv(evals_path, last_step);
    } else {
        for (const auto& p : {metrics_path, evals_path, state_path, dir / "trajectories.jsonl"}) {
            fs::remove(p);
        }
        std::ofstream(dir / "config.json") << config.to_json().dump(2) << '\n';
        base = build_base_policy(config, task, data.train, options.seed);
        save_checkpoint(ckpt_dir / "base.bin", base);
        current = base;
    }

    Trainer trainer(options.variant, config.trainer, task, data.train, current, PolicySnapshot(base),
                    options.seed);
    if (state && state->contains("optimizer_steps")) {
        trainer.optimizer().restore(state->at("optimizer_steps").get<std::size_t>(),
                                    state->value("m", std::vector<double>{}),
                                    state->value("v", std::vector<double>{}));
    }

    std::ofstream metrics = open_csv(metrics_path, metrics_header());
    std::ofstream evals = open_csv(evals_path, evaluations_header());
    std::optional<std::ofstream> dump;
    if (config.run.dump_trajectories) {
        dump.emplace(dir / "trajectories.jsonl", std::ios::app);
    }

    auto run_eval = [&](std::size_t step) {
        const EvaluationResult r = evaluate(trainer.params(), task, data.test, eval_settings, step);
        evals << evaluations_row(step, variant_name, options.seed, r) << '\n';
        evals.flush();
        if (options.log) {
            *options.log << "[" << variant_name << " seed " << options.seed << "] step " << step
                         << " test sampled " << fmt(r.sampled_accuracy) << " greedy "
                         << fmt(r.greedy_accuracy) << '\n';
        }
        return r;
    };
    auto save_state = [&](std::size_t step) {
        const std::string name = "checkpoints/" + step_name(step);
        save_checkpoint(dir / name, trainer.params());
        nlohmann::json s;
        s["step"] = step;
        s["checkpoint"] = name;
        s["optimizer_steps"] = trainer.optimizer().steps_taken();
        s["m"] = trainer.optimizer().first_moment();
        s["v"] = trainer.optimizer().second_moment();
        const fs::path tmp = dir / "state.json.tmp";
        std::ofstream(tmp) << s.dump() << '\n';
        fs::rename(tmp, state_path);
    };

    if (last_step == 0 && !data.test.empty()) {
        const auto r = run_eval(0);
        summary.baseline_test_accuracy = r.sampled_accuracy;
        summary.baseline_greedy_accuracy = r.greedy_accuracy;
    }

    const std::size_t end = config.run.iterations;
    std::size_t budget = options.max_steps_this_call == 0 ? end : options.max_steps_this_call;
    std::size_t step = last_step;
    while (step < end && budget > 0) {
        ++step;
        --budget;
        const IterationMetrics m = trainer.run_iteration(step);
        metrics << metrics_row(m, options.variant, options.seed) << '\n';
        metrics.flush();
        if (dump) {
            for (const auto& g : trainer.last_groups()) {
                for (const auto& t : g.trajectories) {
                    write_trajectory_record(*dump, t);
                }
            }
        }
        const bool eval_now = config.run.eval_every > 0 && (step % config.run.eval_every == 0 || step == end);
        if (eval_now && !data.test.empty()) {
            const auto r = run_eval(step);
            summary.final_test_accuracy = r.sampled_accuracy;
            summary.final_greedy_accuracy = r.greedy_accuracy;
        }
        const bool ckpt_now =
            (config.run.checkpoint_every > 0 && step % config.run.checkpoint_every == 0) || step == end ||
            budget == 0;
        if (ckpt_now) {
            save_state(step);
        }
    }
    summary.steps_completed = step;

    if (step == end) {
        // Baseline comes from the step-0 row, which may predate a resume.
        std::ifstream in(evals_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto cells = split_csv(line);
            if (cells.size() > 4 && cells[0] == "0") {
                summary.baseline_greedy_accuracy = std::stod(cells[3]);
                summary.baseline_test_accuracy = std::stod(cells[4]);
            }
            if (cells.size() > 4 && std::stoull(cells[0]) == end) {
                summary.final_greedy_accuracy = std::stod(cells[3]);
                summary.final_test_accuracy = std::stod(cells[4]);
            }
        }
        nlohmann::json j;
        j["variant"] = variant_name;
        j["seed"] = options.seed;
        j["steps"] = step;
        j["baseline_test_accuracy"] = summary.baseline_test_accuracy;
        j["final_test_accuracy"] = summary.final_test_accuracy;
        j["baseline_greedy_accuracy"] = summary.baseline_greedy_accuracy;
        j["final_greedy_accuracy"] = summary.final_greedy_accuracy;
        std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
    }
    return summary;
}

LengthSeries analyze_lengths(const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    LengthSeries series;
    const fs::path evals_path = run_dir / "evaluations.csv";
    if (fs::exists(evals_path)) {
        std::ifstream in(evals_path);
        std::string line;
        std::getline(in, line);
        const auto header = split_csv(line);
        auto col = [&](const std::string& name) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) {
                throw FormatError("evaluations.csv lacks column " + name);
            }
            return static_cast<std::size_t>(it - header.begin());
        };
        const std::size_t c_step = col("step");
        const std::size_t c_acc = col("sampled_accuracy");
        const std::size_t c_nc = col("n_correct");
        const std::size_t c_ni = col("n_incorrect");
        const std::size_t c_lc = col("mean_len_correct");
        const std::size_t c_li = col("mean_len_incorrect");
        auto opt = [](const std::string& s) {
            return s.empty() ? std::nullopt : std::optional<double>(std::stod(s));
        };
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            auto cells = split_csv(line);
            cells.resize(header.size());
            series.steps.push_back(std::stoull(cells[c_step]));
            series.sampled_accuracy.push_back(std::stod(cells[c_acc]));
            series.n_correct.push_back(std::stoull(cells[c_nc]));
            series.n_incorrect.push_back(std::stoull(cells[c_ni]));
            series.mean_len_correct.push_back(opt(cells[c_lc]));
            series.mean_len_incorrect.push_back(opt(cells[c_li]));
        }
    }

    const fs::path plots = run_dir / "plots";
    fs::create_directories(plots);
    auto write_series = [&](const std::string& name, auto&& value_at) {
        std::ofstream out(plots / name);
        out << "# step value\n";
        for (std::size_t i = 0; i < series.steps.size(); ++i) {
            if (const std::optional<double> v = value_at(i)) {
                out << series.steps[i] << ' ' << fmt(*v) << '\n';
            }
        }
    };
    write_series("len_correct.dat", [&](std::size_t i) { return series.mean_len_correct[i]; });
    write_series("len_incorrect.dat", [&](std::size_t i) { return series.mean_len_incorrect[i]; });
    write_series("count_correct.dat",
                 [&](std::size_t i) { return std::optional<double>(static_cast<double>(series.n_correct[i])); });
    write_series("count_incorrect.dat",
                 [&](std::size_t i) { return std::optional<double>(static_cast<double>(series.n_incorrect[i])); });
    write_series("test_accuracy.dat",
                 [&](std::size_t i) { return std::optional<double>(series.sampled_accuracy[i]); });

    nlohmann::json j;
    j["steps"] = series.steps;
    auto to_json_opt = [](const std::vector<std::optional<double>>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& x : v) {
            a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
        }
        return a;
    };
    j["mean_len_correct"] = to_json_opt(series.mean_len_correct);
    j["mean_len_incorrect"] = to_json_opt(series.mean_len_incorrect);
    j["n_correct"] = series.n_correct;
    j["n_incorrect"] = series.n_incorrect;
    j["sampled_accuracy"] = series.sampled_accuracy;
    std::ofstream(plots / "length_report.json") << j.dump(2) << '\n';
    return series;
}

}  // namespace grpolab
