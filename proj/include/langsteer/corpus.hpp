#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langsteer/tokenizer.hpp"

namespace langsteer {

enum class TaskKind { Numeric, Label, Freeform };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

struct LangText {
    std::string question;
    std::optional<std::string> cot;
    std::string answer;

    bool operator==(const LangText&) const = default;
};

struct ParallelExample {
    std::string id;
    std::map<std::string, LangText> texts;

    // Throws ArgumentError when `lang` is missing.
    const LangText& in(const std::string& lang) const;
    bool operator==(const ParallelExample&) const = default;
};

struct ParallelCorpus {
    TaskKind task_kind = TaskKind::Numeric;
    std::vector<std::string> languages;  // declared order
    std::vector<ParallelExample> examples;

    bool has_language(const std::string& lang) const;
    const ParallelExample& by_id(const std::string& id) const;
    std::vector<std::string> ids() const;
    // Throws ArgumentError if ids repeat, an example misses a declared
    // language, or an answer is empty.
    void validate() const;
};

// JSONL: line 1 is {"task_kind": ..., "languages": [...]}, then one object
// per example {"id", "texts": {lang: {"question", "cot", "answer"}}}.
ParallelCorpus load_parallel_corpus(const std::filesystem::path& path);
void save_parallel_corpus(const ParallelCorpus& corpus, const std::filesystem::path& path);

struct SplitSpec {
    std::vector<std::string> compute_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;

    bool operator==(const SplitSpec&) const = default;
};

enum class SplitPart { Compute, Val, Test };
const std::vector<std::string>& part_ids(const SplitSpec& split, SplitPart part);
std::string to_string(SplitPart part);

// Seeded shuffle, then contiguous thirds (earlier parts take the remainder).
SplitSpec split_three_way(const ParallelCorpus& corpus, std::uint64_t seed);

// Textual layout of demonstrations and queries for one task family.
struct TaskTemplate {
    std::string name;
    TaskKind kind = TaskKind::Numeric;
    std::string system_message;
    std::vector<std::string> labels;  // label tasks only
    std::string stop = "\n\n";        // generation ends at this string
    int max_new_tokens = 64;

    // One complete demonstration block, without separator.
    std::string demo_block(const std::string& question, const std::optional<std::string>& cot,
                           const std::string& answer) const;
    // The trailing query block the model continues.
    std::string query_block(const std::string& question) const;
};

TaskTemplate math_template();
TaskTemplate nli_template();

inline constexpr const char* kBlockSeparator = "\n\n";

struct ComputeSamplePair {
    std::vector<std::string> slot_ids;
    std::string source_text;
    std::string target_text;
};

// One pair per compute example: slot 0 holds the anchor, the other k-1
// slots are drawn uniformly with replacement from the compute set using a
// draw keyed by (seed, anchor index, slot).
std::vector<ComputeSamplePair> build_compute_samples(const ParallelCorpus& corpus,
                                                     const std::vector<std::string>& compute_ids,
                                                     const TaskTemplate& tmpl, const std::string& source_lang,
                                                     const std::string& target_lang, int k, std::uint64_t seed);

// Index of the example drawn for `slot` (>= 1) of sample `anchor`.
std::size_t compute_slot_draw(std::uint64_t seed, std::size_t anchor, std::size_t slot, std::size_t pool_size);

// Half-open token interval.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool operator==(const Span&) const = default;
};

struct RenderedPrompt {
    std::vector<TokenId> tokens;
    std::string text;
    Span system, fewshot, question;
    std::vector<std::string> demo_langs;
    std::string question_lang;

    std::size_t length() const { return tokens.size(); }
};

struct DemoSpec {
    const ParallelExample* example = nullptr;
    std::string lang;
};

// system message, k demonstrations, then the query. Demo questions and
// answers come from the demo's language; chain of thought always from
// `cot_lang`. Spans are token intervals over the tokenized result.
RenderedPrompt render_prompt(const TaskTemplate& tmpl, const Vocab& vocab, const std::vector<DemoSpec>& demos,
                             const ParallelExample& test_example, const std::string& test_lang,
                             const std::string& cot_lang);

}  // namespace langsteer
