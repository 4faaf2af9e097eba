#include "langsteer/testbed.hpp"

#include <set>

#include "langsteer/errors.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

void ToyTestbedSpec::validate() const {
    dialects.validate();
    if (k < 1) throw ArgumentError("testbed k must be >= 1");
    if (episodes < 1) throw ArgumentError("testbed needs at least one episode");
    if (mixed_fraction < 0.0 || mixed_fraction > 1.0) throw ArgumentError("mixed_fraction must lie in [0, 1]");
    if (bare_fraction < 0.0 || bare_fraction > 1.0) throw ArgumentError("bare_fraction must lie in [0, 1]");
    if (dialects.num_dialects() < 2 && mixed_fraction > 0.0) {
        throw ArgumentError("mixed episodes need at least two dialects");
    }
}

ToyTestbedSpec default_testbed_spec() {
    ToyTestbedSpec s;
    s.model.num_layers = 4;
    s.model.hidden_size = 64;
    s.model.num_heads = 4;
    s.model.max_seq_len = 64;
    s.dialects.question_length = 3;
    s.train.steps = 4000;
    s.train.learn_rate = 3e-3f;
    s.train.batch_size = 8;
    s.train.warmup_steps = 100;
    return s;
}

TaskTemplate dialect_template(DialectTask task) {
    TaskTemplate t;
    t.name = to_string(task);
    t.kind = TaskKind::Freeform;
    t.system_message = task == DialectTask::Reverse ? "Reverse each question ." : "Repeat each question .";
    t.stop = "\n";
    t.max_new_tokens = 6;
    return t;
}

ToyTestbed build_testbed_data(const DialectSpec& spec) {
    spec.validate();
    ToyTestbed out;
    DialectSpec r = spec;
    r.task = DialectTask::Reverse;
    DialectSpec c = spec;
    c.task = DialectTask::Copy;
    out.reverse = synth_dialect_corpus(r);
    out.copy = synth_dialect_corpus(c);

    std::set<std::string> symbols;
    for (DialectTask task : {DialectTask::Reverse, DialectTask::Copy}) {
        const TaskTemplate t = dialect_template(task);
        const std::string sample = t.system_message + kBlockSeparator + t.demo_block("x", std::nullopt, "x");
        std::size_t i = 0;
        while (i < sample.size()) {
            if (sample[i] == ' ') {
                ++i;
            } else if (sample[i] == '\n') {
                symbols.insert("\n");
                ++i;
            } else {
                std::size_t j = i;
                while (j < sample.size() && sample[j] != ' ' && sample[j] != '\n') ++j;
                symbols.insert(sample.substr(i, j - i));
                i = j;
            }
        }
    }
    symbols.erase("x");
    for (const auto& tok : out.reverse.lexicon.all_tokens()) symbols.insert(tok);
    out.vocab = Vocab(std::vector<std::string>(symbols.begin(), symbols.end()));
    return out;
}

std::vector<TokenSequence> training_episodes(const ToyTestbed& data, const ToyTestbedSpec& spec) {
    spec.validate();
    const DialectSpec& ds = spec.dialects;
    const DialectLexicon& lex = data.reverse.lexicon;
    const int nd = ds.num_dialects();

    std::set<std::vector<int>> held_out;
    for (const auto& ex : data.reverse.corpus.examples) {
        const std::string& q = ex.in(ds.names[0]).question;
        std::vector<int> symbols;
        std::size_t i = 0;
        while (i < q.size()) {
            std::size_t j = q.find(' ', i);
            if (j == std::string::npos) j = q.size();
            const std::string tok = q.substr(i, j - i);
            const auto& block = lex.blocks[0];
            for (std::size_t s = 0; s < block.size(); ++s) {
                if (block[s] == tok) {
                    symbols.push_back(static_cast<int>(s));
                    break;
                }
            }
            i = j + 1;
        }
        held_out.insert(symbols);
    }

    KeyedRng rng(derive_seed(ds.seed, "episodes"));
    auto draw = [&] {
        std::vector<int> s(static_cast<std::size_t>(ds.question_length));
        do {
            for (int& x : s) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(ds.tokens_per_dialect)));
        } while (held_out.contains(s));
        return s;
    };

    std::vector<TokenSequence> out;
    out.reserve(static_cast<std::size_t>(spec.episodes));
    for (int e = 0; e < spec.episodes; ++e) {
        const DialectTask task = rng.below(2) == 0 ? DialectTask::Reverse : DialectTask::Copy;
        const TaskTemplate tmpl = dialect_template(task);
        const int demo_d = static_cast<int>(rng.below(static_cast<std::uint64_t>(nd)));
        int query_d = demo_d;
        if (rng.uniform() < spec.mixed_fraction) {
            query_d = static_cast<int>(rng.below(static_cast<std::uint64_t>(nd - 1)));
            if (query_d >= demo_d) ++query_d;
        }
        const bool bare = rng.uniform() < spec.bare_fraction;

        std::string text;
        if (!bare) text = tmpl.system_message + kBlockSeparator;
        for (int i = 0; i < spec.k; ++i) {
            const auto q = draw();
            if (i > 0) text += kBlockSeparator;
            text += tmpl.demo_block(lex.render(demo_d, q), std::nullopt, lex.render(demo_d, apply_task(task, q)));
        }
        if (!bare) {
            const auto q = draw();
            text += kBlockSeparator;
            text += tmpl.query_block(lex.render(query_d, q)) + " " + lex.render(demo_d, apply_task(task, q)) + "\n";
        }
        out.push_back(data.vocab.tokenize(text));
        if (out.back().size() > static_cast<std::size_t>(spec.model.max_seq_len)) {
            throw CapacityError("training episode of " + std::to_string(out.back().size()) +
                                " tokens exceeds max_seq_len");
        }
    }
    return out;
}

ToyModel train_testbed_model(const ToyTestbed& data, const ToyTestbedSpec& spec, TrainStats* stats) {
    ModelConfig cfg = spec.model;
    cfg.vocab_size = static_cast<int>(data.vocab.size());
    return train_toy(cfg, data.vocab, training_episodes(data, spec), spec.train, stats);
}

}  // namespace langsteer
