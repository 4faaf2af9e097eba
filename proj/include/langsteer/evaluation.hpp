#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "langsteer/corpus.hpp"
#include "langsteer/model.hpp"
#include "langsteer/steering.hpp"

namespace langsteer {

// Exact correct/total count; comparisons never round.
struct Fraction {
    std::size_t correct = 0;
    std::size_t total = 0;

    double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
    // a/b < c/d  <=>  a*d < c*b
    friend bool operator<(const Fraction& x, const Fraction& y) { return x.correct * y.total < y.correct * x.total; }
    friend bool operator>(const Fraction& x, const Fraction& y) { return y < x; }
    friend bool equivalent(const Fraction& x, const Fraction& y) { return !(x < y) && !(y < x); }
    bool operator==(const Fraction&) const = default;
};

// numeric: number after the last "Final answer:" marker, separators stripped.
// label: lower-cased first word, kept only if it is one of `labels`.
// freeform: trimmed text. std::nullopt is an extraction miss.
std::optional<std::string> extract_answer(std::string_view text, TaskKind kind,
                                          const std::vector<std::string>& labels = {});

// Numeric answers compare as exact decimals with a 1e-6 fallback.
bool answers_match(const std::string& extracted, const std::string& gold, TaskKind kind);

enum class RecipeKind { Baseline, Oracle, Multilingual };
std::string to_string(RecipeKind kind);

struct PromptRecipe {
    RecipeKind kind = RecipeKind::Baseline;
    std::string source_lang = "en";
    std::string target_lang;
    int k = 6;
    std::uint64_t seed = 0;
};

// Demonstration languages a recipe assigns to its k slots. Multilingual
// cycles through the corpus languages starting after the target.
std::vector<std::string> demo_languages(const PromptRecipe& recipe, const std::vector<std::string>& languages);

struct PlanInfo {
    int layer = 0;
    double alpha = 0.0;
    PositionMode mode = PositionMode::Entire;
    std::string vector_hash;
    std::string vector_source;
    std::string vector_target;
    std::string vector_task;
};

struct EvalRecord {
    std::string id;
    std::string prompt_hash;
    std::string generated;
    std::optional<std::string> extracted;
    std::string gold;
    bool correct = false;
    double target_rate = 0.0;
};

struct EvalReport {
    std::string label;  // B, MFS, Ours, OR, Random, CT
    std::string task;
    std::string target_lang;
    std::string split;
    std::optional<PlanInfo> plan;
    std::vector<EvalRecord> records;
    Fraction accuracy;
    // Mean share of generated content tokens that belong to the target language.
    double target_rate = 0.0;
    std::vector<std::string> flags;
};

std::uint64_t plan_hash(const SteeringPlan& plan);
PlanInfo describe(const SteeringPlan& plan);

// Memo of greedy continuations keyed by (model, prompt, plan, budget).
class GenerationCache {
public:
    std::optional<std::vector<TokenId>> find(std::uint64_t key) const;
    void insert(std::uint64_t key, std::vector<TokenId> tokens);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::unordered_map<std::uint64_t, std::vector<TokenId>> entries_;
};

// Binds a model, a corpus with its split and a task template. Demonstrations
// are drawn from the compute part. Thread-safe for concurrent evaluate().
class Evaluator {
public:
    Evaluator(const ToyModel& model, const ParallelCorpus& corpus, TaskTemplate tmpl, SplitSpec split,
              std::string task_name, GenerationCache* cache = nullptr);

    const ToyModel& model() const { return model_; }
    const ParallelCorpus& corpus() const { return corpus_; }
    const TaskTemplate& task_template() const { return tmpl_; }
    const SplitSpec& split() const { return split_; }
    const std::string& task_name() const { return task_; }

    // Tokens that occur in `lang` texts but not in every language.
    const std::set<TokenId>& lexicon(const std::string& lang) const;

    std::vector<DemoSpec> demos_for(const PromptRecipe& recipe, const ParallelExample& test_example) const;
    RenderedPrompt prompt_for(const PromptRecipe& recipe, const ParallelExample& test_example) const;

    EvalReport evaluate(SplitPart part, const PromptRecipe& recipe, const std::optional<SteeringPlan>& plan,
                        const std::string& label, int workers = 1) const;
    EvalReport evaluate_ids(const std::vector<std::string>& ids, const std::string& split_name,
                            const PromptRecipe& recipe, const std::optional<SteeringPlan>& plan,
                            const std::string& label, int workers = 1) const;

private:
    EvalRecord run_one(const ParallelExample& ex, const PromptRecipe& recipe,
                       const std::optional<SteeringPlan>& plan) const;

    const ToyModel& model_;
    const ParallelCorpus& corpus_;
    TaskTemplate tmpl_;
    SplitSpec split_;
    std::string task_;
    GenerationCache* cache_;
    std::map<std::string, std::set<TokenId>> lexicon_;
    std::optional<TokenId> stop_token_;
};

}  // namespace langsteer
