#include "grpolab/vocabulary.hpp"

#include "grpolab/errors.hpp"

namespace grpolab {

Vocabulary::Vocabulary(std::vector<std::string> symbols, std::string_view eos_symbol,
                       std::string_view pad_symbol)
    : symbols_(std::move(symbols)) {
    if (symbols_.size() < 2) {
        throw InputError("vocabulary needs at least two symbols");
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        auto [it, inserted] = lookup_.emplace(symbols_[i], static_cast<Token>(i));
        if (!inserted) {
            throw InputError("duplicate vocabulary symbol '" + symbols_[i] + "'");
        }
    }
    eos_ = index(eos_symbol);
    pad_ = index(pad_symbol);
    if (eos_ == pad_) {
        throw InputError("EOS and PAD must be distinct symbols");
    }
}

bool Vocabulary::contains(std::string_view symbol) const {
    return lookup_.find(std::string(symbol)) != lookup_.end();
}

Token Vocabulary::index(std::string_view symbol) const {
    auto it = lookup_.find(std::string(symbol));
    if (it == lookup_.end()) {
        throw InputError("symbol '" + std::string(symbol) + "' is not in the vocabulary");
    }
    return it->second;
}

const std::string& Vocabulary::symbol(Token token) const {
    if (!contains(token)) {
        throw InputError("token " + std::to_string(token) + " is outside the vocabulary");
    }
    return symbols_[static_cast<std::size_t>(token)];
}

std::vector<Token> Vocabulary::encode(std::span<const std::string> symbols) const {
    std::vector<Token> out;
    out.reserve(symbols.size());
    for (const auto& s : symbols) {
        out.push_back(index(s));
    }
    return out;
}

std::string Vocabulary::decode(std::span<const Token> tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += symbol(tokens[i]);
    }
    return out;
}

}  // namespace grpolab
