#include "langsteer/tokenizer.hpp"

#include "langsteer/errors.hpp"

namespace langsteer {
namespace {

bool is_space_char(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; }

bool is_whitespace_symbol(const std::string& s) {
    return s.size() == 1 && is_space_char(s[0]);
}

}  // namespace

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        const std::string& s = symbols_[i];
        if (s.empty()) throw VocabularyError("empty symbol at index " + std::to_string(i));
        if (!is_whitespace_symbol(s)) {
            for (char c : s) {
                if (is_space_char(c)) throw VocabularyError("symbol contains whitespace: '" + s + "'");
            }
        }
        if (!index_.emplace(s, static_cast<TokenId>(i)).second) {
            throw VocabularyError("duplicate symbol '" + s + "'");
        }
    }
}

const std::string& Vocab::symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
        throw VocabularyError("token id out of range: " + std::to_string(id));
    }
    return symbols_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view symbol) const { return index_.contains(std::string(symbol)); }

TokenId Vocab::id(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    if (it == index_.end()) {
        std::string shown(symbol);
        if (shown == "\n") shown = "\\n";
        throw VocabularyError("unknown symbol '" + shown + "'");
    }
    return it->second;
}

bool Vocab::is_whitespace(TokenId id) const { return is_whitespace_symbol(symbol(id)); }

std::vector<TokenId> Vocab::tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (!is_space_char(text[i])) {
            std::size_t j = i;
            while (j < n && !is_space_char(text[j])) ++j;
            out.push_back(id(text.substr(i, j - i)));
            i = j;
            continue;
        }
        std::size_t j = i;
        while (j < n && is_space_char(text[j])) ++j;
        const bool implicit = (j - i == 1) && text[i] == ' ' && i > 0 && j < n;
        if (!implicit) {
            for (std::size_t p = i; p < j; ++p) out.push_back(id(text.substr(p, 1)));
        }
        i = j;
    }
    return out;
}

std::string Vocab::detokenize(std::span<const TokenId> tokens) const {
    std::string out;
    bool prev_word = false;
    for (TokenId t : tokens) {
        const std::string& s = symbol(t);
        const bool word = !is_whitespace_symbol(s);
        if (word && prev_word) out.push_back(' ');
        out += s;
        prev_word = word;
    }
    return out;
}

}  // namespace langsteer
