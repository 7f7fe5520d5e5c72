#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grpolab {

using Token = std::int32_t;

/// Ordered finite symbol set with designated end-of-sequence and padding symbols.
class Vocabulary {
public:
    Vocabulary(std::vector<std::string> symbols, std::string_view eos_symbol,
               std::string_view pad_symbol);

    std::size_t size() const noexcept { return symbols_.size(); }
    Token eos() const noexcept { return eos_; }
    Token pad() const noexcept { return pad_; }

    bool contains(Token token) const noexcept {
        return token >= 0 && static_cast<std::size_t>(token) < symbols_.size();
    }
    bool contains(std::string_view symbol) const;

    Token index(std::string_view symbol) const;
    const std::string& symbol(Token token) const;
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }

    std::vector<Token> encode(std::span<const std::string> symbols) const;
    /// Joins symbols with single spaces.
    std::string decode(std::span<const Token> tokens) const;

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, Token> lookup_;
    Token eos_ = 0;
    Token pad_ = 0;
};

}  // namespace grpolab
