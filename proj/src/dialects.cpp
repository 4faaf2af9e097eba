#include "langsteer/dialects.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "langsteer/errors.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

std::string to_string(DialectTask task) { return task == DialectTask::Reverse ? "reverse" : "copy"; }

DialectTask parse_dialect_task(const std::string& text) {
    if (text == "reverse") return DialectTask::Reverse;
    if (text == "copy") return DialectTask::Copy;
    throw ArgumentError("unknown dialect task '" + text + "'");
}

double DialectSpec::overlap_at(int a, int b) const {
    if (a == b) return 1.0;
    if (overlap.empty()) return 0.0;
    return overlap[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

void DialectSpec::validate() const {
    if (names.empty()) throw ArgumentError("at least one dialect is required");
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) throw ArgumentError("dialect names must be unique");
    if (tokens_per_dialect < 1) throw ArgumentError("tokens_per_dialect must be >= 1");
    if (question_length < 1) throw ArgumentError("question_length must be >= 1");
    if (num_examples < 0 || train_per_dialect < 0) throw ArgumentError("example counts must be >= 0");
    const auto n = names.size();
    if (!overlap.empty()) {
        if (overlap.size() != n) throw ArgumentError("overlap matrix must be num_dialects x num_dialects");
        for (std::size_t a = 0; a < n; ++a) {
            if (overlap[a].size() != n) throw ArgumentError("overlap matrix must be square");
            if (overlap[a][a] != 1.0) throw ArgumentError("overlap of a dialect with itself must be 1");
            for (std::size_t b = 0; b < n; ++b) {
                const double o = overlap[a][b];
                if (!(o >= 0.0 && o <= 1.0)) throw ArgumentError("overlap entries must lie in [0, 1]");
                if (o != overlap[b][a]) throw ArgumentError("overlap matrix must be symmetric");
            }
        }
    }
}

DialectSpec default_dialect_spec() {
    DialectSpec s;
    const std::size_t n = s.names.size();
    s.overlap.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) s.overlap[i][i] = 1.0;
    s.overlap[1][2] = s.overlap[2][1] = 0.8;
    return s;
}

int DialectLexicon::index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw ArgumentError("unknown dialect '" + name + "'");
}

std::vector<std::string> DialectLexicon::all_tokens() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& block : blocks) {
        for (const auto& t : block) {
            if (seen.insert(t).second) out.push_back(t);
        }
    }
    return out;
}

double DialectLexicon::jaccard(int a, int b) const {
    const auto& A = blocks[static_cast<std::size_t>(a)];
    const auto& B = blocks[static_cast<std::size_t>(b)];
    std::set<std::string> sa(A.begin(), A.end()), sb(B.begin(), B.end()), uni = sa;
    uni.insert(sb.begin(), sb.end());
    std::size_t shared = 0;
    for (const auto& t : sa) shared += sb.count(t);
    return uni.empty() ? 1.0 : static_cast<double>(shared) / static_cast<double>(uni.size());
}

std::string DialectLexicon::render(int dialect, const std::vector<int>& symbols) const {
    const auto& block = blocks[static_cast<std::size_t>(dialect)];
    std::string out;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i) out.push_back(' ');
        out += block.at(static_cast<std::size_t>(symbols[i]));
    }
    return out;
}

namespace {

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    // Keeps the smaller index as representative.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
};

// Shared symbols giving the Jaccard value closest to `target` for blocks of size n.
int shared_count(double target, int n) {
    int best = 0;
    double best_err = 2.0;
    for (int s = 0; s <= n; ++s) {
        const double j = static_cast<double>(s) / static_cast<double>(2 * n - s);
        const double err = std::abs(j - target);
        if (err < best_err - 1e-12) {
            best = s;
            best_err = err;
        }
    }
    return best;
}

}  // namespace

DialectLexicon build_lexicon(const DialectSpec& spec) {
    spec.validate();
    const auto nd = static_cast<std::size_t>(spec.num_dialects());
    const auto n = static_cast<std::size_t>(spec.tokens_per_dialect);
    DisjointSets sets(nd * n);
    std::vector<std::vector<int>> shared(nd, std::vector<int>(nd, 0));
    for (std::size_t a = 0; a < nd; ++a) {
        for (std::size_t b = a + 1; b < nd; ++b) {
            const int s = shared_count(spec.overlap_at(static_cast<int>(a), static_cast<int>(b)),
                                       spec.tokens_per_dialect);
            shared[a][b] = shared[b][a] = s;
            for (int i = 0; i < s; ++i) sets.unite(a * n + static_cast<std::size_t>(i), b * n + static_cast<std::size_t>(i));
        }
    }

    DialectLexicon lex;
    lex.names = spec.names;
    lex.blocks.assign(nd, std::vector<std::string>(n));
    std::set<std::size_t> components;
    for (std::size_t d = 0; d < nd; ++d) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t root = sets.find(d * n + i);
            components.insert(root);
            lex.blocks[d][i] = spec.names[root / n] + std::to_string(root % n);
        }
    }
    if (components.size() > spec.vocab_budget) {
        throw CapacityError("dialect blocks need " + std::to_string(components.size()) +
                            " distinct tokens, budget is " + std::to_string(spec.vocab_budget));
    }
    for (std::size_t a = 0; a < nd; ++a) {
        for (std::size_t b = a + 1; b < nd; ++b) {
            const int s = shared[a][b];
            const double want = static_cast<double>(s) / static_cast<double>(2 * n - static_cast<std::size_t>(s));
            const double got = lex.jaccard(static_cast<int>(a), static_cast<int>(b));
            if (std::abs(got - want) > 1e-12) {
                throw ArgumentError("overlaps are not jointly realisable: " + spec.names[a] + "/" + spec.names[b] +
                                    " would overlap at " + std::to_string(got));
            }
        }
    }
    return lex;
}

std::vector<int> apply_task(DialectTask task, const std::vector<int>& symbols) {
    if (task == DialectTask::Copy) return symbols;
    return {symbols.rbegin(), symbols.rend()};
}

DialectCorpus synth_dialect_corpus(const DialectSpec& spec) {
    DialectCorpus out;
    out.lexicon = build_lexicon(spec);
    const int nd = spec.num_dialects();

    auto draw = [&](KeyedRng& rng) {
        std::vector<int> s(static_cast<std::size_t>(spec.question_length));
        for (int& x : s) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.tokens_per_dialect)));
        return s;
    };

    out.train.resize(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) {
        KeyedRng rng(derive_seed(spec.seed, "dialect-train", {static_cast<std::uint64_t>(d)}));
        for (int i = 0; i < spec.train_per_dialect; ++i) {
            const auto q = draw(rng);
            out.train[static_cast<std::size_t>(d)].push_back(
                {out.lexicon.render(d, q), std::nullopt, out.lexicon.render(d, apply_task(spec.task, q))});
        }
    }

    out.corpus.task_kind = TaskKind::Freeform;
    out.corpus.languages = spec.names;
    KeyedRng rng(derive_seed(spec.seed, "dialect-parallel"));
    std::set<std::vector<int>> used;
    const double space = std::pow(static_cast<double>(spec.tokens_per_dialect), spec.question_length);
    if (static_cast<double>(spec.num_examples) > space) {
        throw CapacityError("cannot draw " + std::to_string(spec.num_examples) + " distinct questions");
    }
    for (int i = 0; i < spec.num_examples; ++i) {
        std::vector<int> q = draw(rng);
        while (!used.insert(q).second) q = draw(rng);
        const auto a = apply_task(spec.task, q);
        ParallelExample ex;
        char id[32];
        std::snprintf(id, sizeof id, "%s-%04d", to_string(spec.task).c_str(), i);
        ex.id = id;
        for (int d = 0; d < nd; ++d) {
            ex.texts[spec.names[static_cast<std::size_t>(d)]] = {out.lexicon.render(d, q), std::nullopt,
                                                                 out.lexicon.render(d, a)};
        }
        out.corpus.examples.push_back(std::move(ex));
    }
    return out;
}

}  // namespace langsteer
