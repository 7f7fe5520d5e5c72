#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grpolab/mdp.hpp"
#include "grpolab/vocabulary.hpp"

namespace grpolab {

enum class TaskFamily { kCountdown, kDirectSum };

TaskFamily parse_task_family(const std::string& name);
std::string to_string(TaskFamily family);

/// One problem: combine `numbers` to reach `target` (countdown) or add them (direct sum).
struct Instance {
    std::string id;
    std::vector<int> numbers;
    int target = 0;
    std::string split;

    bool operator==(const Instance&) const = default;
};

struct GenerationConfig {
    TaskFamily family = TaskFamily::kCountdown;
    std::size_t min_numbers = 2;
    std::size_t max_numbers = 2;
    int min_value = 1;
    int max_value = 9;
    /// Operators the generator may use to build targets: any of "+-*/".
    std::string ops = "+*";
    int min_target = 1;
    int max_target = 99;
    bool solvable = true;
    std::size_t max_attempts = 10000;
};

/// Deterministic for a fixed seed. Solvable instances are checked by brute force.
/// Throws GenerationError when no solvable instance can be found within the attempt budget.
std::vector<Instance> generate_instances(const GenerationConfig& config, std::size_t count,
                                         std::uint64_t seed, const std::string& split);

void write_dataset(std::ostream& out, std::span<const Instance> instances);
std::vector<Instance> read_dataset(std::istream& in);

// ---------------------------------------------------------------------------
// Expressions

/// Arithmetic expression tree over integer literals and + - * / with parentheses.
class Expression {
public:
    struct Node {
        char op = 0;  // 0 for a literal
        long long value = 0;
        std::unique_ptr<Node> lhs;
        std::unique_ptr<Node> rhs;
    };

    explicit Expression(std::unique_ptr<Node> root) : root_(std::move(root)) {}

    const Node& root() const noexcept { return *root_; }
    std::vector<long long> literals() const;
    /// Value under the classical rules (every intermediate a positive integer, exact division);
    /// nullopt when any rule is broken.
    std::optional<long long> evaluate() const;
    /// Each literal drawn from `numbers` with multiplicity respected.
    bool uses_numbers_from(std::span<const int> numbers) const;
    std::string to_string() const;

private:
    std::unique_ptr<Node> root_;
};

/// Recursive-descent parse of
///   expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)* ;
///   factor := integer | '(' expr ')'
/// over one lexeme per element. Throws ParseError on anything outside the grammar.
Expression parse_expression(std::span<const std::string> lexemes);
/// Character-level convenience; whitespace is ignored, every other character is one lexeme.
Expression parse_expression(std::string_view text);
Expression parse_expression(std::span<const Token> tokens, const Vocabulary& vocab);

/// Brute-force candidate: an expression tree built by combining the numbers, with its value
/// computed in exact rational arithmetic. `value` is empty when some node is not a positive integer.
struct CandidateExpression {
    std::string text;
    std::optional<long long> value;
};

/// Every expression over every ordered sub-multiset of `numbers` using `ops`, rendered
/// both with minimal and with full parentheses.
std::vector<CandidateExpression> enumerate_expressions(std::span<const int> numbers,
                                                       std::string_view ops);
/// Values reachable by valid expressions; `use_all` restricts to expressions using every number.
std::vector<long long> reachable_values(std::span<const int> numbers, std::string_view ops,
                                        bool use_all);
bool is_solvable(std::span<const int> numbers, int target, std::string_view ops);

// ---------------------------------------------------------------------------
// Responses

struct SolutionMarkers {
    Token open = 0;
    Token close = 0;
};

/// Think span [0, think_length) then solution span [think_length, think_length + solution_length).
struct ResponseSegmentation {
    std::size_t think_length = 0;
    std::size_t solution_length = 0;
    std::size_t total() const noexcept { return think_length + solution_length; }
};

/// Splits at the first open marker; with no marker the whole response is think.
ResponseSegmentation segment(std::span<const Token> response, const SolutionMarkers& markers);

/// Vocabulary, prompt encoding and verifier for one task family.
class TaskEnvironment {
public:
    TaskEnvironment(TaskFamily family, std::size_t target_width = 2);

    TaskFamily family() const noexcept { return family_; }
    const Vocabulary& vocabulary() const noexcept { return vocab_; }
    const SolutionMarkers& markers() const noexcept { return markers_; }
    Token think_token() const noexcept { return think_; }

    Prompt encode_prompt(const Instance& instance) const;
    /// Reward in {0,1}. Only the solution segment is inspected; never throws.
    int verify(const Instance& instance, std::span<const Token> response) const;
    /// Tokens strictly between the open and close markers, or nullopt when either is missing.
    std::optional<std::vector<Token>> solution_body(std::span<const Token> response) const;
    /// "<sol> expr </sol> <eos>" for an expression written as characters.
    std::vector<Token> render_answer(std::string_view expression) const;

private:
    TaskFamily family_;
    std::size_t target_width_;
    Vocabulary vocab_;
    SolutionMarkers markers_;
    Token think_ = 0;
};

/// Default symbol set shared by both task families.
Vocabulary arithmetic_vocabulary();

}  // namespace grpolab
