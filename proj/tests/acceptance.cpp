// Acceptance battery: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "grpolab/checks.hpp"
#include "grpolab/config.hpp"
#include "grpolab/experiment.hpp"

using namespace grpolab;
namespace fs = std::filesystem;

namespace {

bool report(const std::string& id, const CheckResult& r, double budget_seconds) {
    const bool in_time = r.seconds <= budget_seconds;
    const bool ok = r.passed && in_time;
    std::cout << id << ' ' << (ok ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << " ["
              << std::fixed << std::setprecision(1) << r.seconds << "s of " << budget_seconds << "s]"
              << std::defaultfloat << '\n';
    return ok;
}

std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return os.str();
}

struct TrainingOutcome {
    CheckResult result;
    std::vector<fs::path> grpo_runs;
};

TrainingOutcome training_parity(const fs::path& config_path, const fs::path& out_root) {
    const auto start = std::chrono::steady_clock::now();
    TrainingOutcome outcome;
    CheckResult& r = outcome.result;
    r.name = "desk-scale training parity";
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    std::ostringstream detail;
    bool gains_ok = true;
    bool baseline_ok = true;
    double mean_final[2] = {0.0, 0.0};
    const Variant variants[2] = {Variant::kGrpo, Variant::kFisftPm};
    for (int k = 0; k < 2; ++k) {
        for (const std::uint64_t seed : config.run.seeds) {
            RunOptions options;
            options.variant = variants[k];
            options.seed = seed;
            options.log = &std::cerr;
            options.run_dir = out_root / (to_string(variants[k]) + "-seed" + std::to_string(seed));
            const RunSummary s = run_training(config, options);
            const double gain = s.final_test_accuracy - s.baseline_test_accuracy;
            gains_ok = gains_ok && gain >= 0.30;
            baseline_ok = baseline_ok && s.baseline_test_accuracy <= 0.15;
            mean_final[k] += s.final_test_accuracy / static_cast<double>(config.run.seeds.size());
            detail << to_string(variants[k]) << "/seed" << seed << " " << pct(s.baseline_test_accuracy) << " -> "
                   << pct(s.final_test_accuracy) << "; ";
            if (variants[k] == Variant::kGrpo) {
                outcome.grpo_runs.push_back(options.run_dir);
            }
        }
    }
    const double gap = std::abs(mean_final[0] - mean_final[1]);
    detail << "mean final " << pct(mean_final[0]) << " vs " << pct(mean_final[1]) << ", gap " << pct(gap)
           << " (each run must gain >= 30 points from a baseline <= 15%; gap <= 10 points)";
    r.passed = gains_ok && baseline_ok && gap <= 0.10;
    r.detail = detail.str();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

/// Incorrect-response length drift in the GRPO runs, reported only.
std::string length_trend(const std::vector<fs::path>& runs) {
    std::ostringstream os;
    for (const auto& dir : runs) {
        const LengthSeries s = analyze_lengths(dir);
        std::optional<double> first;
        std::optional<double> last;
        std::optional<double> first_c;
        std::optional<double> last_c;
        for (std::size_t i = 0; i < s.steps.size(); ++i) {
            if (s.mean_len_incorrect[i]) {
                if (!first) first = s.mean_len_incorrect[i];
                last = s.mean_len_incorrect[i];
            }
            if (s.mean_len_correct[i]) {
                if (!first_c) first_c = s.mean_len_correct[i];
                last_c = s.mean_len_correct[i];
            }
        }
        os << "    " << dir.filename().string() << ": " << s.steps.size() << " evaluation points";
        if (first && last) {
            os << std::setprecision(3) << ", incorrect length " << *first << " -> " << *last;
        }
        if (first_c && last_c) {
            os << std::setprecision(3) << ", correct length " << *first_c << " -> " << *last_c;
        }
        os << " (plot data in " << (dir / "plots").string() << ")\n";
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path source = GRPOLAB_SOURCE_DIR;
    const fs::path config_path = argc > 1 ? fs::path(argv[1]) : source / "configs" / "mini_countdown.json";
    const fs::path out_root = fs::absolute(argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_runs"));
    const TrainerConfig base;
    bool all = true;

    all &= report("A1", check_equivalence(base, 100, 101), 60.0);
    all &= report("A2", check_clip_inactive(base, 100, 202), 60.0);
    all &= report("A3", check_gradients(base, 20, 303), 300.0);
    all &= report("A4", check_advantages(base), 10.0);

    const TrainingOutcome training = training_parity(config_path, out_root);
    all &= report("A5", training.result, 1800.0);

    CheckResult signal = check_length_signal(base, base.horizon);
    const CheckResult desk = check_length_signal(base, ExperimentConfig::load(config_path).trainer.horizon);
    signal.passed = signal.passed && desk.passed;
    signal.detail += "; desk horizon: " + desk.detail;
    signal.seconds += desk.seconds;
    all &= report("A6", signal, 10.0);
    std::cout << "    length trend in the GRPO desk runs (reported, not asserted):\n" << length_trend(training.grpo_runs);

    all &= report("A7", check_verifier(3, 100000, 707), 120.0);

    std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << '\n';
    return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
