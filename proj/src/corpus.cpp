#include "langsteer/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "langsteer/errors.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

using nlohmann::json;

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Numeric: return "numeric";
        case TaskKind::Label: return "label";
        case TaskKind::Freeform: return "freeform";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& text) {
    if (text == "numeric") return TaskKind::Numeric;
    if (text == "label") return TaskKind::Label;
    if (text == "freeform") return TaskKind::Freeform;
    throw ArgumentError("unknown task kind '" + text + "'");
}

const LangText& ParallelExample::in(const std::string& lang) const {
    auto it = texts.find(lang);
    if (it == texts.end()) throw ArgumentError("example " + id + " has no text in language '" + lang + "'");
    return it->second;
}

bool ParallelCorpus::has_language(const std::string& lang) const {
    return std::find(languages.begin(), languages.end(), lang) != languages.end();
}

const ParallelExample& ParallelCorpus::by_id(const std::string& id) const {
    for (const auto& e : examples) {
        if (e.id == id) return e;
    }
    throw ArgumentError("no example with id '" + id + "'");
}

std::vector<std::string> ParallelCorpus::ids() const {
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.id);
    return out;
}

void ParallelCorpus::validate() const {
    if (languages.empty()) throw ArgumentError("corpus declares no languages");
    std::set<std::string> seen;
    for (const auto& e : examples) {
        if (!seen.insert(e.id).second) throw ArgumentError("duplicate example id '" + e.id + "'");
        for (const auto& lang : languages) {
            const LangText& t = e.in(lang);
            if (t.answer.empty()) throw ArgumentError("example " + e.id + " has an empty answer in " + lang);
        }
    }
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus: " + path.string());
    ParallelCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen;

    auto parse = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw ValidationError(line_no, std::string("invalid JSON: ") + e.what());
        }
    };

    if (!std::getline(in, line)) throw ValidationError(1, "missing header line");
    line_no = 1;
    {
        json header = parse(line);
        if (!header.is_object() || !header.contains("task_kind") || !header.contains("languages")) {
            throw ValidationError(1, "header must hold task_kind and languages");
        }
        try {
            corpus.task_kind = parse_task_kind(header["task_kind"].get<std::string>());
            corpus.languages = header["languages"].get<std::vector<std::string>>();
        } catch (const std::exception& e) {
            throw ValidationError(1, e.what());
        }
        if (corpus.languages.empty()) throw ValidationError(1, "no languages declared");
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj = parse(line);
        if (!obj.is_object()) throw ValidationError(line_no, "expected a JSON object");
        if (!obj.contains("id") || !obj["id"].is_string()) throw ValidationError(line_no, "missing string field 'id'");
        if (!obj.contains("texts") || !obj["texts"].is_object()) {
            throw ValidationError(line_no, "missing object field 'texts'");
        }
        ParallelExample ex;
        ex.id = obj["id"].get<std::string>();
        if (!seen.insert(ex.id).second) throw ValidationError(line_no, "duplicate id '" + ex.id + "'");
        for (const auto& [lang, rec] : obj["texts"].items()) {
            if (!rec.is_object()) throw ValidationError(line_no, "texts." + lang + " must be an object");
            LangText t;
            if (!rec.contains("question") || !rec["question"].is_string()) {
                throw ValidationError(line_no, "texts." + lang + " missing 'question'");
            }
            if (!rec.contains("answer") || !rec["answer"].is_string()) {
                throw ValidationError(line_no, "texts." + lang + " missing 'answer'");
            }
            t.question = rec["question"].get<std::string>();
            t.answer = rec["answer"].get<std::string>();
            if (t.answer.empty()) throw ValidationError(line_no, "texts." + lang + " has an empty answer");
            if (rec.contains("cot") && !rec["cot"].is_null()) {
                if (!rec["cot"].is_string()) throw ValidationError(line_no, "texts." + lang + ".cot must be a string");
                t.cot = rec["cot"].get<std::string>();
            }
            ex.texts.emplace(lang, std::move(t));
        }
        for (const auto& lang : corpus.languages) {
            if (!ex.texts.contains(lang)) throw ValidationError(line_no, "missing language '" + lang + "'");
        }
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

void save_parallel_corpus(const ParallelCorpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << json{{"task_kind", to_string(corpus.task_kind)}, {"languages", corpus.languages}}.dump() << '\n';
    for (const auto& e : corpus.examples) {
        json texts = json::object();
        for (const auto& [lang, t] : e.texts) {
            texts[lang] = {{"question", t.question},
                           {"cot", t.cot ? json(*t.cot) : json(nullptr)},
                           {"answer", t.answer}};
        }
        out << json{{"id", e.id}, {"texts", texts}}.dump() << '\n';
    }
}

const std::vector<std::string>& part_ids(const SplitSpec& split, SplitPart part) {
    switch (part) {
        case SplitPart::Compute: return split.compute_ids;
        case SplitPart::Val: return split.val_ids;
        case SplitPart::Test: return split.test_ids;
    }
    throw ArgumentError("bad split part");
}

std::string to_string(SplitPart part) {
    switch (part) {
        case SplitPart::Compute: return "compute";
        case SplitPart::Val: return "val";
        case SplitPart::Test: return "test";
    }
    return "?";
}

SplitSpec split_three_way(const ParallelCorpus& corpus, std::uint64_t seed) {
    const std::size_t n = corpus.examples.size();
    if (n < 3) throw ArgumentError("three-way split needs at least 3 examples, got " + std::to_string(n));
    const auto perm = seeded_permutation(n, derive_seed(seed, "split"));
    const std::size_t base = n / 3, extra = n % 3;
    const std::size_t sizes[3] = {base + (extra > 0), base + (extra > 1), base};
    SplitSpec split;
    split.seed = seed;
    std::vector<std::string>* parts[3] = {&split.compute_ids, &split.val_ids, &split.test_ids};
    std::size_t at = 0;
    for (int p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < sizes[p]; ++i) parts[p]->push_back(corpus.examples[perm[at++]].id);
    }
    return split;
}

std::string TaskTemplate::demo_block(const std::string& question, const std::optional<std::string>& cot,
                                     const std::string& answer) const {
    if (kind == TaskKind::Label) {
        const auto cut = question.find('\n');
        if (cut == std::string::npos) {
            throw ArgumentError("label-task question must hold premise and hypothesis separated by a newline");
        }
        return "Premise: " + question.substr(0, cut) + "\nHypothesis: " + question.substr(cut + 1) +
               "\nLabel: " + answer;
    }
    if (cot) return "Question: " + question + "\nAnswer: " + *cot + "\nFinal answer: " + answer;
    if (kind == TaskKind::Numeric) return "Question: " + question + "\nAnswer: Final answer: " + answer;
    return "Question: " + question + "\nAnswer: " + answer;
}

std::string TaskTemplate::query_block(const std::string& question) const {
    if (kind == TaskKind::Label) {
        const auto cut = question.find('\n');
        if (cut == std::string::npos) {
            throw ArgumentError("label-task question must hold premise and hypothesis separated by a newline");
        }
        return "Premise: " + question.substr(0, cut) + "\nHypothesis: " + question.substr(cut + 1) + "\nLabel:";
    }
    return "Question: " + question + "\nAnswer:";
}

TaskTemplate math_template() {
    TaskTemplate t;
    t.name = "math";
    t.kind = TaskKind::Numeric;
    t.system_message =
        "You are a helpful assistant that solves math word problems step by step. Show your reasoning clearly "
        "and end with 'Final answer: <number>'.";
    t.stop = "\n\n";
    t.max_new_tokens = 256;
    return t;
}

TaskTemplate nli_template() {
    TaskTemplate t;
    t.name = "nli";
    t.kind = TaskKind::Label;
    t.system_message =
        "You are a helpful assistant that performs natural language inference. Given a premise and a hypothesis, "
        "determine the relationship between them. The relationship can be: 'entailment' (hypothesis is true "
        "given the premise), 'neutral' (hypothesis might be true or false), or 'contradiction' (hypothesis is "
        "false given the premise). Answer with only: entailment, neutral, or contradiction.";
    t.labels = {"entailment", "neutral", "contradiction"};
    t.stop = "\n";
    t.max_new_tokens = 8;
    return t;
}

std::size_t compute_slot_draw(std::uint64_t seed, std::size_t anchor, std::size_t slot, std::size_t pool_size) {
    return bounded(derive_seed(seed, "compute-slot", {anchor, slot}), pool_size);
}

std::vector<ComputeSamplePair> build_compute_samples(const ParallelCorpus& corpus,
                                                     const std::vector<std::string>& compute_ids,
                                                     const TaskTemplate& tmpl, const std::string& source_lang,
                                                     const std::string& target_lang, int k, std::uint64_t seed) {
    if (k < 1) throw ArgumentError("k must be >= 1");
    if (compute_ids.empty()) throw ArgumentError("compute set is empty");
    if (!corpus.has_language(source_lang)) throw ArgumentError("corpus lacks language '" + source_lang + "'");
    if (!corpus.has_language(target_lang)) throw ArgumentError("corpus lacks language '" + target_lang + "'");

    std::vector<const ParallelExample*> pool;
    pool.reserve(compute_ids.size());
    for (const auto& id : compute_ids) pool.push_back(&corpus.by_id(id));

    auto render = [&](const ParallelExample& e, const std::string& lang) {
        const LangText& t = e.in(lang);
        return tmpl.demo_block(t.question, t.cot, t.answer);
    };

    std::vector<ComputeSamplePair> out;
    out.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        ComputeSamplePair pair;
        for (int slot = 0; slot < k; ++slot) {
            const std::size_t idx =
                slot == 0 ? i : compute_slot_draw(seed, i, static_cast<std::size_t>(slot), pool.size());
            const ParallelExample& e = *pool[idx];
            if (slot > 0) {
                pair.source_text += kBlockSeparator;
                pair.target_text += kBlockSeparator;
            }
            pair.slot_ids.push_back(e.id);
            pair.source_text += render(e, source_lang);
            pair.target_text += render(e, target_lang);
        }
        out.push_back(std::move(pair));
    }
    return out;
}

RenderedPrompt render_prompt(const TaskTemplate& tmpl, const Vocab& vocab, const std::vector<DemoSpec>& demos,
                             const ParallelExample& test_example, const std::string& test_lang,
                             const std::string& cot_lang) {
    RenderedPrompt p;
    auto append = [&](const std::string& text) {
        const auto toks = vocab.tokenize(text);
        p.tokens.insert(p.tokens.end(), toks.begin(), toks.end());
        p.text += text;
    };

    if (!tmpl.system_message.empty()) append(tmpl.system_message + kBlockSeparator);
    p.system = {0, p.tokens.size()};

    for (const DemoSpec& d : demos) {
        if (d.example == nullptr) throw ArgumentError("demo without example");
        const LangText& q = d.example->in(d.lang);
        const std::optional<std::string>& cot = d.example->in(cot_lang).cot;
        append(tmpl.demo_block(q.question, cot, q.answer) + kBlockSeparator);
        p.demo_langs.push_back(d.lang);
    }
    p.fewshot = {p.system.end, p.tokens.size()};

    append(tmpl.query_block(test_example.in(test_lang).question));
    p.question = {p.fewshot.end, p.tokens.size()};
    p.question_lang = test_lang;
    return p;
}

}  // namespace langsteer
