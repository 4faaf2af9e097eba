#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace langsteer {

using TokenId = std::int32_t;

// Whole-symbol vocabulary. Text is split into words (maximal runs of
// non-whitespace) and whitespace characters. A single space between two
// words is implicit; every other whitespace character is its own token,
// so detokenize(tokenize(x)) == x for any tokenizable x.
class Vocab {
public:
    Vocab() = default;
    explicit Vocab(std::vector<std::string> symbols);

    std::size_t size() const { return symbols_.size(); }
    const std::vector<std::string>& symbols() const { return symbols_; }
    const std::string& symbol(TokenId id) const;
    bool contains(std::string_view symbol) const;
    // Throws VocabularyError for unknown symbols.
    TokenId id(std::string_view symbol) const;
    bool is_whitespace(TokenId id) const;

    std::vector<TokenId> tokenize(std::string_view text) const;
    std::string detokenize(std::span<const TokenId> tokens) const;

    bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace langsteer
