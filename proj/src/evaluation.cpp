#include "langsteer/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>

#include "langsteer/errors.hpp"
#include "langsteer/parallel.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {
namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Parses a leading decimal number ("-1,234.50") into canonical form
// ("-1234.5"). Returns nullopt when no digit is present.
std::optional<std::string> canonical_number(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    bool negative = false;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
        negative = s[i] == '-';
        ++i;
    }
    if (i < s.size() && s[i] == '$') ++i;
    std::string int_part, frac_part;
    bool any = false;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            int_part.push_back(c);
            any = true;
        } else if (c == ',' && any && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
            // thousands separator
        } else {
            break;
        }
        ++i;
    }
    if (i + 1 < s.size() && s[i] == '.' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) frac_part.push_back(s[i++]);
        any = true;
    }
    if (!any) return std::nullopt;
    const auto nz = int_part.find_first_not_of('0');
    int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
    while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
    std::string out = int_part;
    if (!frac_part.empty()) out += "." + frac_part;
    if (negative && out != "0") out = "-" + out;
    return out;
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view text, TaskKind kind,
                                          const std::vector<std::string>& labels) {
    switch (kind) {
        case TaskKind::Numeric: {
            constexpr std::string_view marker = "Final answer:";
            const auto at = text.rfind(marker);
            if (at == std::string_view::npos) return std::nullopt;
            return canonical_number(text.substr(at + marker.size()));
        }
        case TaskKind::Label: {
            const std::string_view t = trim(text);
            const auto end = t.find_first_of(" \t\r\n");
            std::string word(t.substr(0, end));
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (word.empty()) return std::nullopt;
            if (std::find(labels.begin(), labels.end(), word) == labels.end()) return std::nullopt;
            return word;
        }
        case TaskKind::Freeform: {
            const std::string_view t = trim(text);
            if (t.empty()) return std::nullopt;
            return std::string(t);
        }
    }
    return std::nullopt;
}

bool answers_match(const std::string& extracted, const std::string& gold, TaskKind kind) {
    switch (kind) {
        case TaskKind::Numeric: {
            const auto a = canonical_number(extracted);
            const auto b = canonical_number(gold);
            if (!a || !b) return false;
            if (*a == *b) return true;
            try {
                return std::abs(std::stod(*a) - std::stod(*b)) <= 1e-6;
            } catch (const std::exception&) {
                return false;
            }
        }
        case TaskKind::Label: {
            std::string g(trim(gold));
            std::transform(g.begin(), g.end(), g.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            return extracted == g;
        }
        case TaskKind::Freeform: return trim(extracted) == trim(gold);
    }
    return false;
}

std::string to_string(RecipeKind kind) {
    switch (kind) {
        case RecipeKind::Baseline: return "B";
        case RecipeKind::Oracle: return "OR";
        case RecipeKind::Multilingual: return "MFS";
    }
    return "?";
}

std::vector<std::string> demo_languages(const PromptRecipe& recipe, const std::vector<std::string>& languages) {
    if (recipe.k < 0) throw ArgumentError("k must be >= 0");
    const auto k = static_cast<std::size_t>(recipe.k);
    switch (recipe.kind) {
        case RecipeKind::Baseline: return std::vector<std::string>(k, recipe.source_lang);
        case RecipeKind::Oracle: return std::vector<std::string>(k, recipe.target_lang);
        case RecipeKind::Multilingual: {
            if (languages.size() < 2) throw ArgumentError("multilingual few-shot needs at least two languages");
            const auto it = std::find(languages.begin(), languages.end(), recipe.target_lang);
            if (it == languages.end()) throw ArgumentError("target language '" + recipe.target_lang + "' not available");
            const auto start = static_cast<std::size_t>(it - languages.begin()) + 1;
            std::vector<std::string> out;
            for (std::size_t i = 0; i < k; ++i) out.push_back(languages[(start + i) % languages.size()]);
            return out;
        }
    }
    throw ArgumentError("bad recipe kind");
}

std::uint64_t plan_hash(const SteeringPlan& plan) {
    std::uint64_t h = fnv1a64("plan");
    const std::int64_t head[] = {plan.layer, static_cast<std::int64_t>(plan.mode),
                                 std::bit_cast<std::int64_t>(plan.alpha)};
    h = fnv1a64(std::as_bytes(std::span(head)), h);
    return fnv1a64(std::as_bytes(std::span(plan.vector.values)), h);
}

PlanInfo describe(const SteeringPlan& plan) {
    PlanInfo info;
    info.layer = plan.layer;
    info.alpha = plan.alpha;
    info.mode = plan.mode;
    info.vector_hash = hex64(fnv1a64(std::as_bytes(std::span(plan.vector.values))));
    info.vector_source = plan.vector.meta.source_lang;
    info.vector_target = plan.vector.meta.target_lang;
    info.vector_task = plan.vector.meta.task;
    return info;
}

std::optional<std::vector<TokenId>> GenerationCache::find(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void GenerationCache::insert(std::uint64_t key, std::vector<TokenId> tokens) {
    std::lock_guard lock(mu_);
    entries_.try_emplace(key, std::move(tokens));
}

std::size_t GenerationCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

Evaluator::Evaluator(const ToyModel& model, const ParallelCorpus& corpus, TaskTemplate tmpl, SplitSpec split,
                     std::string task_name, GenerationCache* cache)
    : model_(model), corpus_(corpus), tmpl_(std::move(tmpl)), split_(std::move(split)), task_(std::move(task_name)),
      cache_(cache) {
    if (tmpl_.kind != corpus_.task_kind) {
        throw ArgumentError("template '" + tmpl_.name + "' is for " + to_string(tmpl_.kind) + " tasks, corpus is " +
                            to_string(corpus_.task_kind));
    }
    std::map<TokenId, std::size_t> seen_in;
    for (const auto& lang : corpus_.languages) {
        std::set<TokenId>& lex = lexicon_[lang];
        for (const auto& ex : corpus_.examples) {
            const LangText& t = ex.in(lang);
            for (const std::string* s : {&t.question, &t.answer}) {
                try {
                    for (TokenId id : model_.vocab().tokenize(*s)) {
                        if (!model_.vocab().is_whitespace(id)) lex.insert(id);
                    }
                } catch (const VocabularyError&) {
                }
            }
        }
        for (TokenId id : lex) ++seen_in[id];
    }
    for (auto& [lang, lex] : lexicon_) {
        std::erase_if(lex, [&](TokenId id) { return seen_in[id] == corpus_.languages.size() && lexicon_.size() > 1; });
    }
    if (tmpl_.stop.size() == 1 && model_.vocab().contains(tmpl_.stop)) stop_token_ = model_.vocab().id(tmpl_.stop);
}

const std::set<TokenId>& Evaluator::lexicon(const std::string& lang) const {
    auto it = lexicon_.find(lang);
    if (it == lexicon_.end()) throw ArgumentError("language '" + lang + "' not in corpus");
    return it->second;
}

std::vector<DemoSpec> Evaluator::demos_for(const PromptRecipe& recipe, const ParallelExample& test_example) const {
    const auto langs = demo_languages(recipe, corpus_.languages);
    std::vector<const ParallelExample*> pool;
    for (const auto& id : split_.compute_ids) {
        if (id != test_example.id) pool.push_back(&corpus_.by_id(id));
    }
    if (langs.empty()) return {};
    if (pool.empty()) throw ArgumentError("no demonstrations available in the compute part");

    KeyedRng rng(derive_seed(recipe.seed, "demos", {fnv1a64(test_example.id)}));
    std::vector<DemoSpec> out;
    if (pool.size() >= langs.size()) {
        for (std::size_t i = 0; i < langs.size(); ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back({pool[i], langs[i]});
        }
    } else {
        for (const auto& lang : langs) out.push_back({pool[rng.below(pool.size())], lang});
    }
    return out;
}

RenderedPrompt Evaluator::prompt_for(const PromptRecipe& recipe, const ParallelExample& test_example) const {
    return render_prompt(tmpl_, model_.vocab(), demos_for(recipe, test_example), test_example, recipe.target_lang,
                         recipe.source_lang);
}

EvalRecord Evaluator::run_one(const ParallelExample& ex, const PromptRecipe& recipe,
                              const std::optional<SteeringPlan>& plan) const {
    const RenderedPrompt prompt = prompt_for(recipe, ex);
    const auto room = static_cast<long>(model_.config().max_seq_len) - static_cast<long>(prompt.length());
    if (room <= 0) {
        throw CapacityError("prompt for " + ex.id + " has " + std::to_string(prompt.length()) +
                            " tokens, no room to generate");
    }
    const int budget = static_cast<int>(std::min<long>(tmpl_.max_new_tokens, room));

    const std::uint64_t prompt_h = fnv1a64(std::as_bytes(std::span(prompt.tokens)));
    std::uint64_t key = derive_seed(model_.hash(), "generation", {prompt_h, static_cast<std::uint64_t>(budget)});
    if (plan) key = splitmix64(key ^ plan_hash(*plan));

    std::vector<TokenId> cont;
    if (auto hit = cache_ ? cache_->find(key) : std::nullopt) {
        cont = std::move(*hit);
    } else {
        cont = generate(model_, prompt, plan, budget, stop_token_);
        if (cache_) cache_->insert(key, cont);
    }

    std::string text = model_.vocab().detokenize(cont);
    const auto cut = text.find(tmpl_.stop);
    std::size_t kept_tokens = cont.size();
    if (cut != std::string::npos) {
        text.resize(cut);
        kept_tokens = 0;
        while (kept_tokens < cont.size() &&
               model_.vocab().detokenize(std::span(cont.data(), kept_tokens + 1)).size() <= cut) {
            ++kept_tokens;
        }
    }

    EvalRecord rec;
    rec.id = ex.id;
    rec.prompt_hash = hex64(prompt_h);
    rec.generated = text;
    rec.gold = ex.in(recipe.target_lang).answer;
    rec.extracted = extract_answer(text, tmpl_.kind, tmpl_.labels);
    rec.correct = rec.extracted && answers_match(*rec.extracted, rec.gold, tmpl_.kind);

    const auto& target = lexicon(recipe.target_lang);
    std::size_t content = 0, in_target = 0;
    for (std::size_t i = 0; i < kept_tokens; ++i) {
        if (model_.vocab().is_whitespace(cont[i])) continue;
        ++content;
        in_target += target.contains(cont[i]);
    }
    rec.target_rate = content == 0 ? 0.0 : static_cast<double>(in_target) / static_cast<double>(content);
    return rec;
}

EvalReport Evaluator::evaluate_ids(const std::vector<std::string>& ids, const std::string& split_name,
                                   const PromptRecipe& recipe, const std::optional<SteeringPlan>& plan,
                                   const std::string& label, int workers) const {
    if (ids.empty()) throw ArgumentError("cannot evaluate an empty split part");
    if (!corpus_.has_language(recipe.target_lang)) {
        throw ArgumentError("corpus lacks target language '" + recipe.target_lang + "'");
    }
    if (!corpus_.has_language(recipe.source_lang)) {
        throw ArgumentError("corpus lacks source language '" + recipe.source_lang + "'");
    }
    if (plan && (plan->layer < 1 || plan->layer > model_.config().num_layers)) {
        throw ArgumentError("plan layer " + std::to_string(plan->layer) + " outside the model");
    }
    std::vector<const ParallelExample*> examples;
    for (const auto& id : ids) examples.push_back(&corpus_.by_id(id));

    EvalReport report;
    report.label = label;
    report.task = task_;
    report.target_lang = recipe.target_lang;
    report.split = split_name;
    if (plan) report.plan = describe(*plan);
    report.records.resize(examples.size());
    parallel_for(examples.size(), workers,
                 [&](std::size_t i) { report.records[i] = run_one(*examples[i], recipe, plan); });

    double rate = 0.0;
    for (const auto& r : report.records) {
        report.accuracy.correct += r.correct ? 1 : 0;
        rate += r.target_rate;
    }
    report.accuracy.total = report.records.size();
    report.target_rate = rate / static_cast<double>(report.records.size());
    return report;
}

EvalReport Evaluator::evaluate(SplitPart part, const PromptRecipe& recipe, const std::optional<SteeringPlan>& plan,
                               const std::string& label, int workers) const {
    return evaluate_ids(part_ids(split_, part), to_string(part), recipe, plan, label, workers);
}

}  // namespace langsteer
