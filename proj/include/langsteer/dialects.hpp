#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langsteer/corpus.hpp"

namespace langsteer {

// Synthetic "languages": each dialect renders an abstract alphabet of
// `tokens_per_dialect` symbols through its own token block. Blocks of two
// dialects share tokens (at the same abstract symbols) so that their Jaccard
// overlap matches the declared overlap matrix.
enum class DialectTask { Reverse, Copy };

std::string to_string(DialectTask task);
DialectTask parse_dialect_task(const std::string& text);

struct DialectSpec {
    std::vector<std::string> names = {"en", "xa", "xb", "xc", "xd"};
    int tokens_per_dialect = 9;
    // Symmetric, unit diagonal, entries in [0, 1]. Empty means no sharing.
    std::vector<std::vector<double>> overlap;
    int question_length = 4;
    int num_examples = 150;
    int train_per_dialect = 200;
    std::size_t vocab_budget = 512;
    DialectTask task = DialectTask::Reverse;
    std::uint64_t seed = 0;

    int num_dialects() const { return static_cast<int>(names.size()); }
    double overlap_at(int a, int b) const;
    // Throws ArgumentError on malformed fields.
    void validate() const;
};

// The default five-dialect setup: xa and xb overlap at 0.8, all other pairs 0.
DialectSpec default_dialect_spec();

struct DialectLexicon {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> blocks;  // blocks[dialect][symbol]

    int index(const std::string& name) const;
    // Distinct tokens in first-use order.
    std::vector<std::string> all_tokens() const;
    double jaccard(int a, int b) const;
    std::string render(int dialect, const std::vector<int>& symbols) const;
};

// Throws CapacityError when the distinct token count exceeds the budget and
// ArgumentError when the overlaps cannot be realised together.
DialectLexicon build_lexicon(const DialectSpec& spec);

std::vector<int> apply_task(DialectTask task, const std::vector<int>& symbols);

struct DialectCorpus {
    DialectLexicon lexicon;
    // Per dialect: monolingual (question, answer) examples for training.
    std::vector<std::vector<LangText>> train;
    ParallelCorpus corpus;
};

DialectCorpus synth_dialect_corpus(const DialectSpec& spec);

}  // namespace langsteer
