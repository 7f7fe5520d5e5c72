#include <algorithm>
#include <numeric>
#include <set>

#include "grpolab/errors.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

namespace {

using Node = Expression::Node;

bool is_digit_lexeme(const std::string& s) {
    return s.size() == 1 && s[0] >= '0' && s[0] <= '9';
}

char normalize_op(const std::string& s) {
    if (s == "+" || s == "-" || s == "*" || s == "/") {
        return s[0];
    }
    if (s == "\xC3\x97") {  // ×
        return '*';
    }
    if (s == "\xC3\xB7") {  // ÷
        return '/';
    }
    return 0;
}

class Parser {
public:
    explicit Parser(std::span<const std::string> lexemes) : lex_(lexemes) {}

    Expression parse() {
        if (lex_.empty()) {
            throw ParseError("empty expression", 0);
        }
        auto root = expr();
        if (pos_ != lex_.size()) {
            throw ParseError("unexpected '" + lex_[pos_] + "'", pos_);
        }
        return Expression(std::move(root));
    }

private:
    std::unique_ptr<Node> expr() {
        auto lhs = term();
        while (pos_ < lex_.size()) {
            const char op = normalize_op(lex_[pos_]);
            if (op != '+' && op != '-') {
                break;
            }
            ++pos_;
            lhs = binary(op, std::move(lhs), term());
        }
        return lhs;
    }

    std::unique_ptr<Node> term() {
        auto lhs = factor();
        while (pos_ < lex_.size()) {
            const char op = normalize_op(lex_[pos_]);
            if (op != '*' && op != '/') {
                break;
            }
            ++pos_;
            lhs = binary(op, std::move(lhs), factor());
        }
        return lhs;
    }

    std::unique_ptr<Node> factor() {
        if (pos_ >= lex_.size()) {
            throw ParseError("unexpected end of expression", pos_);
        }
        if (lex_[pos_] == "(") {
            ++pos_;
            auto inner = expr();
            if (pos_ >= lex_.size() || lex_[pos_] != ")") {
                throw ParseError("missing ')'", pos_);
            }
            ++pos_;
            return inner;
        }
        if (!is_digit_lexeme(lex_[pos_])) {
            throw ParseError("expected a number, found '" + lex_[pos_] + "'", pos_);
        }
        const std::size_t start = pos_;
        long long value = 0;
        while (pos_ < lex_.size() && is_digit_lexeme(lex_[pos_])) {
            if (pos_ - start >= 12) {
                throw ParseError("integer literal too long", start);
            }
            value = value * 10 + (lex_[pos_][0] - '0');
            ++pos_;
        }
        if (pos_ - start > 1 && lex_[start] == "0") {
            throw ParseError("leading zero in integer literal", start);
        }
        auto node = std::make_unique<Node>();
        node->value = value;
        return node;
    }

    static std::unique_ptr<Node> binary(char op, std::unique_ptr<Node> lhs, std::unique_ptr<Node> rhs) {
        auto node = std::make_unique<Node>();
        node->op = op;
        node->lhs = std::move(lhs);
        node->rhs = std::move(rhs);
        return node;
    }

    std::span<const std::string> lex_;
    std::size_t pos_ = 0;
};

void collect_literals(const Node& n, std::vector<long long>& out) {
    if (n.op == 0) {
        out.push_back(n.value);
        return;
    }
    collect_literals(*n.lhs, out);
    collect_literals(*n.rhs, out);
}

std::optional<long long> eval_checked(const Node& n) {
    if (n.op == 0) {
        return n.value > 0 ? std::optional<long long>(n.value) : std::nullopt;
    }
    const auto a = eval_checked(*n.lhs);
    if (!a) {
        return std::nullopt;
    }
    const auto b = eval_checked(*n.rhs);
    if (!b) {
        return std::nullopt;
    }
    long long r = 0;
    switch (n.op) {
        case '+':
            if (__builtin_add_overflow(*a, *b, &r)) {
                return std::nullopt;
            }
            break;
        case '-':
            r = *a - *b;
            break;
        case '*':
            if (__builtin_mul_overflow(*a, *b, &r)) {
                return std::nullopt;
            }
            break;
        case '/':
            if (*a % *b != 0) {
                return std::nullopt;
            }
            r = *a / *b;
            break;
        default:
            return std::nullopt;
    }
    if (r <= 0) {
        return std::nullopt;
    }
    return r;
}

int precedence(char op) {
    return (op == '+' || op == '-') ? 1 : (op == '*' || op == '/') ? 2 : 3;
}

std::string render(const Node& n) {
    if (n.op == 0) {
        return std::to_string(n.value);
    }
    const int p = precedence(n.op);
    std::string l = render(*n.lhs);
    std::string r = render(*n.rhs);
    if (precedence(n.lhs->op) < p) {
        l = "(" + l + ")";
    }
    if (precedence(n.rhs->op) <= p) {
        r = "(" + r + ")";
    }
    return l + n.op + r;
}

}  // namespace

std::vector<long long> Expression::literals() const {
    std::vector<long long> out;
    collect_literals(*root_, out);
    return out;
}

std::optional<long long> Expression::evaluate() const {
    return eval_checked(*root_);
}

bool Expression::uses_numbers_from(std::span<const int> numbers) const {
    std::vector<long long> pool(numbers.begin(), numbers.end());
    for (long long lit : literals()) {
        auto it = std::find(pool.begin(), pool.end(), lit);
        if (it == pool.end()) {
            return false;
        }
        pool.erase(it);
    }
    return true;
}

std::string Expression::to_string() const {
    return render(*root_);
}

Expression parse_expression(std::span<const std::string> lexemes) {
    return Parser(lexemes).parse();
}

Expression parse_expression(std::string_view text) {
    std::vector<std::string> lexemes;
    for (std::size_t i = 0; i < text.size();) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        // keep two-byte UTF-8 sequences (× and ÷) together
        const std::size_t len = (c >= 0xC0 && c < 0xE0 && i + 1 < text.size()) ? 2 : 1;
        lexemes.emplace_back(text.substr(i, len));
        i += len;
    }
    return parse_expression(lexemes);
}

Expression parse_expression(std::span<const Token> tokens, const Vocabulary& vocab) {
    std::vector<std::string> lexemes;
    lexemes.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!vocab.contains(tokens[i])) {
            throw ParseError("token outside the vocabulary", i);
        }
        lexemes.push_back(vocab.symbol(tokens[i]));
    }
    return parse_expression(lexemes);
}

// ---------------------------------------------------------------------------
// Brute-force enumeration in exact rational arithmetic.

namespace {

struct Rational {
    long long num = 0;
    long long den = 1;
};

Rational normalized(long long num, long long den) {
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    return g > 1 ? Rational{num / g, den / g} : Rational{num, den};
}

struct Item {
    Rational value;
    bool valid = true;  // every node so far is a positive integer
    std::string minimal;
    std::string full;
    int prec = 3;
    unsigned mask = 0;
};

std::optional<Item> combine(const Item& a, const Item& b, char op) {
    Item out;
    const Rational x = a.value;
    const Rational y = b.value;
    switch (op) {
        case '+':
            out.value = normalized(x.num * y.den + y.num * x.den, x.den * y.den);
            break;
        case '-':
            out.value = normalized(x.num * y.den - y.num * x.den, x.den * y.den);
            break;
        case '*':
            out.value = normalized(x.num * y.num, x.den * y.den);
            break;
        case '/':
            if (y.num == 0) {
                return std::nullopt;  // a zero divisor is already an invalid subtree
            }
            out.value = normalized(x.num * y.den, x.den * y.num);
            break;
    }
    out.valid = a.valid && b.valid && out.value.den == 1 && out.value.num > 0;
    out.prec = precedence(op);
    out.mask = a.mask | b.mask;
    const std::string lm = a.prec < out.prec ? "(" + a.minimal + ")" : a.minimal;
    const std::string rm = b.prec <= out.prec ? "(" + b.minimal + ")" : b.minimal;
    out.minimal = lm + op + rm;
    const std::string lf = a.prec == 3 ? a.full : "(" + a.full + ")";
    const std::string rf = b.prec == 3 ? b.full : "(" + b.full + ")";
    out.full = lf + op + rf;
    return out;
}

template <typename Visit>
void search_children(std::vector<Item>& pool, std::string_view ops, Visit& visit) {
    const std::size_t n = pool.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            for (char op : ops) {
                auto c = combine(pool[i], pool[j], op);
                if (!c) {
                    continue;
                }
                std::vector<Item> next;
                next.reserve(n - 1);
                for (std::size_t k = 0; k < n; ++k) {
                    if (k != i && k != j) {
                        next.push_back(pool[k]);
                    }
                }
                next.push_back(std::move(*c));
                visit(next.back());
                if (next.size() > 1) {
                    search_children(next, ops, visit);
                }
            }
        }
    }
}

template <typename Visit>
void enumerate_items(std::span<const int> numbers, std::string_view ops, Visit visit) {
    if (numbers.size() > 16) {
        throw InputError("too many numbers for brute-force enumeration");
    }
    std::vector<Item> pool;
    for (std::size_t i = 0; i < numbers.size(); ++i) {
        Item it;
        it.value = {numbers[i], 1};
        it.valid = numbers[i] > 0;
        it.minimal = it.full = std::to_string(numbers[i]);
        it.mask = 1u << i;
        pool.push_back(it);
    }
    for (const Item& it : pool) {
        visit(it);
    }
    if (pool.size() > 1) {
        search_children(pool, ops, visit);
    }
}

}  // namespace

std::vector<CandidateExpression> enumerate_expressions(std::span<const int> numbers,
                                                       std::string_view ops) {
    std::set<std::string> seen;
    std::vector<CandidateExpression> out;
    enumerate_items(numbers, ops, [&](const Item& it) {
        const std::optional<long long> v =
            it.valid ? std::optional<long long>(it.value.num) : std::nullopt;
        if (seen.insert(it.minimal).second) {
            out.push_back({it.minimal, v});
        }
        if (seen.insert(it.full).second) {
            out.push_back({it.full, v});
        }
    });
    return out;
}

std::vector<long long> reachable_values(std::span<const int> numbers, std::string_view ops,
                                        bool use_all) {
    const unsigned all = numbers.size() >= 32 ? ~0u : (1u << numbers.size()) - 1u;
    std::set<long long> values;
    enumerate_items(numbers, ops, [&](const Item& it) {
        if (it.valid && (!use_all || it.mask == all)) {
            values.insert(it.value.num);
        }
    });
    return {values.begin(), values.end()};
}

bool is_solvable(std::span<const int> numbers, int target, std::string_view ops) {
    const auto values = reachable_values(numbers, ops, false);
    return std::binary_search(values.begin(), values.end(), static_cast<long long>(target));
}

}  // namespace grpolab
