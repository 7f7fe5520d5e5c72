#include "grpolab/tasks.hpp"

#include <algorithm>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "grpolab/errors.hpp"
#include "grpolab/random.hpp"

namespace grpolab {

TaskFamily parse_task_family(const std::string& name) {
    if (name == "countdown") {
        return TaskFamily::kCountdown;
    }
    if (name == "direct-sum" || name == "sum") {
        return TaskFamily::kDirectSum;
    }
    throw ConfigError("unknown task family '" + name + "'");
}

std::string to_string(TaskFamily family) {
    return family == TaskFamily::kCountdown ? "countdown" : "direct-sum";
}

namespace {

std::string make_id(const std::string& split, std::size_t i) {
    std::ostringstream os;
    os << (split.empty() ? "inst" : split) << '-';
    os.width(6);
    os.fill('0');
    os << i;
    return os.str();
}

void validate(const GenerationConfig& c) {
    if (c.min_numbers < 1 || c.min_numbers > c.max_numbers || c.min_value > c.max_value ||
        c.min_target > c.max_target || c.ops.empty()) {
        throw InputError("generation ranges must be nonempty");
    }
    if (c.max_numbers > 6) {
        throw InputError("at most 6 input numbers are supported");
    }
    for (char op : c.ops) {
        if (std::string_view("+-*/").find(op) == std::string_view::npos) {
            throw InputError(std::string("unsupported operator '") + op + "'");
        }
    }
}

}  // namespace

std::vector<Instance> generate_instances(const GenerationConfig& config, std::size_t count,
                                         std::uint64_t seed, const std::string& split) {
    validate(config);
    Rng rng = derive_rng({seed, 0x7461736bULL});
    auto draw = [&](int lo, int hi) {
        return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
    };
    std::vector<Instance> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Instance inst;
        inst.id = make_id(split, i);
        inst.split = split;
        bool found = false;
        for (std::size_t attempt = 0; attempt < config.max_attempts && !found; ++attempt) {
            const auto n = static_cast<std::size_t>(
                draw(static_cast<int>(config.min_numbers), static_cast<int>(config.max_numbers)));
            inst.numbers.assign(n, 0);
            for (int& v : inst.numbers) {
                v = draw(config.min_value, config.max_value);
            }
            if (config.family == TaskFamily::kDirectSum) {
                long long sum = 0;
                for (int v : inst.numbers) {
                    sum += v;
                }
                if (sum >= config.min_target && sum <= config.max_target) {
                    inst.target = static_cast<int>(sum);
                    found = true;
                }
                continue;
            }
            if (!config.solvable) {
                inst.target = draw(config.min_target, config.max_target);
                found = true;
                continue;
            }
            // Targets come from expressions that use every input number.
            std::vector<long long> targets;
            for (long long v : reachable_values(inst.numbers, config.ops, true)) {
                if (v >= config.min_target && v <= config.max_target) {
                    targets.push_back(v);
                }
            }
            if (targets.empty()) {
                continue;
            }
            inst.target = static_cast<int>(targets[uniform_index(rng, targets.size())]);
            if (!is_solvable(inst.numbers, inst.target, config.ops)) {
                throw GenerationError("brute-force check rejected a generated instance");
            }
            found = true;
        }
        if (!found) {
            throw GenerationError("no valid instance found within " +
                                  std::to_string(config.max_attempts) + " attempts");
        }
        out.push_back(std::move(inst));
    }
    return out;
}

void write_dataset(std::ostream& out, std::span<const Instance> instances) {
    for (const auto& inst : instances) {
        nlohmann::ordered_json j;
        j["id"] = inst.id;
        j["numbers"] = inst.numbers;
        j["target"] = inst.target;
        j["split"] = inst.split;
        out << j.dump() << '\n';
    }
}

std::vector<Instance> read_dataset(std::istream& in) {
    std::vector<Instance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Instance inst;
            inst.id = j.at("id").get<std::string>();
            inst.numbers = j.at("numbers").get<std::vector<int>>();
            inst.target = j.at("target").get<int>();
            inst.split = j.value("split", std::string());
            if (inst.numbers.empty()) {
                throw FormatError("instance has no numbers");
            }
            out.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

ResponseSegmentation segment(std::span<const Token> response, const SolutionMarkers& markers) {
    const auto it = std::find(response.begin(), response.end(), markers.open);
    const auto think = static_cast<std::size_t>(it - response.begin());
    return {think, response.size() - think};
}

Vocabulary arithmetic_vocabulary() {
    std::vector<std::string> symbols;
    for (char c = '0'; c <= '9'; ++c) {
        symbols.emplace_back(1, c);
    }
    for (const char* s : {"+", "-", "*", "/", "(", ")", ",", "=", "<sol>", "</sol>", ".", "<eos>",
                          "<pad>"}) {
        symbols.emplace_back(s);
    }
    return Vocabulary(std::move(symbols), "<eos>", "<pad>");
}

TaskEnvironment::TaskEnvironment(TaskFamily family, std::size_t target_width)
    : family_(family), target_width_(target_width), vocab_(arithmetic_vocabulary()) {
    markers_ = {vocab_.index("<sol>"), vocab_.index("</sol>")};
    think_ = vocab_.index(".");
}

Prompt TaskEnvironment::encode_prompt(const Instance& instance) const {
    Prompt p;
    p.instance_id = instance.id;
    auto put_number = [&](long long v, std::size_t width) {
        std::string digits = std::to_string(v);
        if (digits.size() < width) {
            digits.insert(0, width - digits.size(), '0');
        }
        for (char c : digits) {
            p.tokens.push_back(vocab_.index(std::string(1, c)));
        }
    };
    const Token sep = vocab_.index(family_ == TaskFamily::kCountdown ? "," : "+");
    for (std::size_t i = 0; i < instance.numbers.size(); ++i) {
        if (i > 0) {
            p.tokens.push_back(sep);
        }
        put_number(instance.numbers[i], 0);
    }
    p.tokens.push_back(vocab_.index("="));
    if (family_ == TaskFamily::kCountdown) {
        put_number(instance.target, target_width_);
    }
    return p;
}

std::optional<std::vector<Token>> TaskEnvironment::solution_body(std::span<const Token> response) const {
    const auto open = std::find(response.begin(), response.end(), markers_.open);
    if (open == response.end()) {
        return std::nullopt;
    }
    const auto close = std::find(open + 1, response.end(), markers_.close);
    if (close == response.end()) {
        return std::nullopt;
    }
    return std::vector<Token>(open + 1, close);
}

int TaskEnvironment::verify(const Instance& instance, std::span<const Token> response) const {
    try {
        const auto body = solution_body(response);
        if (!body) {
            return 0;
        }
        const Expression e = parse_expression(*body, vocab_);
        if (family_ == TaskFamily::kDirectSum) {
            return (e.root().op == 0 && e.root().value == instance.target) ? 1 : 0;
        }
        if (!e.uses_numbers_from(instance.numbers)) {
            return 0;
        }
        const auto value = e.evaluate();
        return (value && *value == instance.target) ? 1 : 0;
    } catch (const std::exception&) {
        return 0;
    }
}

std::vector<Token> TaskEnvironment::render_answer(std::string_view expression) const {
    std::vector<Token> out{markers_.open};
    for (std::size_t i = 0; i < expression.size(); ++i) {
        if (expression[i] != ' ') {
            out.push_back(vocab_.index(std::string(1, expression[i])));
        }
    }
    out.push_back(markers_.close);
    out.push_back(vocab_.eos());
    return out;
}

}  // namespace grpolab
