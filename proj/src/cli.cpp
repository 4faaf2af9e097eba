#include "langsteer/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "format.hpp"
#include "langsteer/analysis.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/experiment.hpp"
#include "langsteer/report.hpp"
#include "langsteer/rng.hpp"
#include "langsteer/testbed.hpp"

namespace langsteer {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

const std::set<std::string> kConfigKeys = {
    "seed",         "workers",     "out",          "model",          "corpus",        "task",
    "template",     "system_message", "max_new_tokens", "stop",       "source_lang",   "target_lang",
    "target_langs", "layers",      "alphas",       "positions",      "k",             "pooling",
    "layer",        "alpha",       "position",     "vector",         "part",          "baselines",
    "source_corpus", "source_task", "source_template", "cluster_layer", "vector_files", "dumps",
    "fractions",    "export_dumps", "testbed",     "linkage"};

const std::set<std::string> kPathKeys = {"model", "corpus", "vector", "source_corpus"};

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    std::optional<int> layer;
    std::optional<double> alpha;
    std::optional<std::string> position;
    std::optional<std::string> pooling;
    std::optional<std::string> fraction_list;
    std::vector<std::string> kinds;
    std::vector<std::string> reports;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> parse_fraction_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("--fraction-list entry '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw UsageError("--fraction-list is empty");
    return out;
}

fs::path absolute_from(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative()) path = base / path;
    return fs::weakly_canonical(path).lexically_normal();
}

// Effective configuration: file contents, paths made absolute, flags applied.
json load_config(const Flags& flags) {
    const fs::path cfg_path(flags.config);
    json cfg;
    try {
        cfg = json::parse(read_file(cfg_path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + cfg_path.string() + " is not valid JSON: " + e.what());
    }
    if (cfg.is_object() && cfg.contains("format") && cfg["format"] == "langsteer-manifest") cfg = cfg.at("config");
    if (!cfg.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        if (!kConfigKeys.contains(key)) throw UsageError("unknown config key \"" + key + "\"");
    }
    const fs::path base = fs::absolute(cfg_path).parent_path();
    for (const auto& key : kPathKeys) {
        if (cfg.contains(key)) cfg[key] = absolute_from(base, cfg[key].get<std::string>()).string();
    }
    if (cfg.contains("vector_files")) {
        for (auto& [lang, p] : cfg["vector_files"].items()) p = absolute_from(base, p.get<std::string>()).string();
    }
    if (cfg.contains("dumps")) {
        for (auto& [lang, pair] : cfg["dumps"].items()) {
            for (const char* side : {"source", "target"}) {
                pair[side] = absolute_from(base, pair.at(side).get<std::string>()).string();
            }
        }
    }
    if (cfg.contains("out")) cfg["out"] = absolute_from(base, cfg["out"].get<std::string>()).string();

    if (flags.seed) cfg["seed"] = *flags.seed;
    if (flags.layer) {
        cfg["layer"] = *flags.layer;
        cfg["layers"] = json::array({*flags.layer});
        cfg["cluster_layer"] = *flags.layer;
    }
    if (flags.alpha) {
        cfg["alpha"] = *flags.alpha;
        cfg["alphas"] = json::array({*flags.alpha});
    }
    if (flags.position) {
        cfg["position"] = *flags.position;
        cfg["positions"] = json::array({*flags.position});
    }
    if (flags.pooling) cfg["pooling"] = *flags.pooling;
    if (flags.fraction_list) cfg["fractions"] = parse_fraction_list(*flags.fraction_list);
    if (!cfg.contains("seed")) throw UsageError("no seed given (set \"seed\" in the config or pass --seed)");
    return cfg;
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T fallback) {
    if (!cfg.contains(key)) return fallback;
    try {
        return cfg.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError("config field \"" + key + "\" has the wrong type");
    }
}

std::string require_string(const json& cfg, const std::string& key, const std::string& why) {
    if (!cfg.contains(key)) throw UsageError("config is missing \"" + key + "\" (" + why + ")");
    return get_or<std::string>(cfg, key, "");
}

class Run {
public:
    Run(std::string command, json cfg, fs::path out_dir, int workers, std::ostream& out, std::ostream& err)
        : command_(std::move(command)), cfg_(std::move(cfg)), out_dir_(std::move(out_dir)), workers_(workers),
          out_(out), err_(err) {
        seed_ = cfg_.at("seed").get<std::uint64_t>();
        fs::create_directories(out_dir_);
    }

    json& cfg() { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    int workers() const { return workers_; }
    std::ostream& out() { return out_; }
    std::ostream& err() { return err_; }
    const fs::path& out_dir() const { return out_dir_; }

    void write(const std::string& rel, const std::string& bytes) {
        const fs::path p = out_dir_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw Error("cannot write " + p.string());
        f.close();
        record(rel);
    }

    template <typename WriteFn>
    void write_with(const std::string& rel, WriteFn&& fn) {
        const fs::path p = out_dir_ / rel;
        fs::create_directories(p.parent_path());
        fn(p);
        record(rel);
    }

    void add_seed(const std::string& purpose, std::uint64_t value) { seeds_[purpose] = value; }

    void finish() {
        json cfg = cfg_;
        cfg.erase("workers");
        cfg.erase("out");
        json manifest;
        manifest["format"] = "langsteer-manifest";
        manifest["version"] = 1;
        manifest["command"] = command_;
        manifest["config"] = cfg;
        json seeds;
        seeds["root"] = seed_;
        for (const auto& [k, v] : seeds_) seeds[k] = v;
        manifest["seeds"] = seeds;
        json arts = json::object();
        for (const auto& [k, v] : artifacts_) arts[k] = "fnv1a64:" + v;
        manifest["artifacts"] = arts;
        const std::string text = manifest.dump(2) + "\n";
        std::ofstream f(out_dir_ / "manifest.json", std::ios::binary);
        f << text;
        if (!f) throw Error("cannot write manifest");
    }

private:
    void record(const std::string& rel) {
        const std::string bytes = read_file(out_dir_ / rel);
        artifacts_[rel] = hex64(fnv1a64(bytes));
    }

    std::string command_;
    json cfg_;
    fs::path out_dir_;
    int workers_;
    std::ostream& out_;
    std::ostream& err_;
    std::uint64_t seed_ = 0;
    std::map<std::string, std::string> artifacts_;
    std::map<std::string, std::uint64_t> seeds_;
};

TaskTemplate template_named(const std::string& name) {
    if (name == "math") return math_template();
    if (name == "nli") return nli_template();
    if (name == "reverse") return dialect_template(DialectTask::Reverse);
    if (name == "copy") return dialect_template(DialectTask::Copy);
    throw UsageError("unknown template '" + name + "' (expected math, nli, reverse or copy)");
}

TaskTemplate template_for(const json& cfg, const std::string& task_key, const std::string& template_key) {
    const std::string task = require_string(cfg, task_key, "task name");
    TaskTemplate t = template_named(get_or<std::string>(cfg, template_key, task));
    t.name = task;
    if (template_key == "template") {
        if (cfg.contains("system_message")) t.system_message = get_or<std::string>(cfg, "system_message", "");
        if (cfg.contains("max_new_tokens")) t.max_new_tokens = get_or<int>(cfg, "max_new_tokens", 0);
        if (cfg.contains("stop")) t.stop = get_or<std::string>(cfg, "stop", "");
    }
    return t;
}

// A model, corpus and split bound into an evaluator.
struct Workspace {
    ToyModel model;
    ParallelCorpus corpus;
    TaskTemplate tmpl;
    SplitSpec split;
    GenerationCache cache;
    std::unique_ptr<Evaluator> evaluator;

    Workspace(ToyModel m, ParallelCorpus c, TaskTemplate t, std::uint64_t seed)
        : model(std::move(m)), corpus(std::move(c)), tmpl(std::move(t)) {
        if (corpus.task_kind != tmpl.kind) {
            throw ArgumentError("template '" + tmpl.name + "' expects " + to_string(tmpl.kind) +
                                " answers but the corpus is " + to_string(corpus.task_kind));
        }
        split = split_three_way(corpus, seed);
        evaluator = std::make_unique<Evaluator>(model, corpus, tmpl, split, tmpl.name, &cache);
    }
};

std::unique_ptr<Workspace> open_workspace(Run& run, const std::string& corpus_key = "corpus",
                                          const std::string& task_key = "task",
                                          const std::string& template_key = "template") {
    const json& cfg = run.cfg();
    const fs::path model_path = require_string(cfg, "model", "path of a trained model");
    const fs::path corpus_path = require_string(cfg, corpus_key, "parallel corpus JSONL");
    if (!fs::exists(model_path)) throw UsageError("model file " + model_path.string() + " does not exist");
    if (!fs::exists(corpus_path)) throw UsageError("corpus file " + corpus_path.string() + " does not exist");
    auto ws = std::make_unique<Workspace>(load_model(model_path), load_parallel_corpus(corpus_path),
                                          template_for(cfg, task_key, template_key), run.seed());
    return ws;
}

ExperimentConfig experiment_config(Run& run) {
    json& cfg = run.cfg();
    ExperimentConfig ec;
    ec.layers = get_or(cfg, "layers", ec.layers);
    ec.alphas = get_or(cfg, "alphas", ec.alphas);
    std::vector<std::string> positions;
    for (PositionMode m : ec.modes) positions.push_back(to_string(m));
    positions = get_or(cfg, "positions", positions);
    ec.modes.clear();
    for (const auto& p : positions) ec.modes.push_back(parse_position_mode(p));
    ec.k = get_or(cfg, "k", ec.k);
    ec.seed = run.seed();
    ec.source_lang = get_or<std::string>(cfg, "source_lang", ec.source_lang);
    ec.task = get_or<std::string>(cfg, "task", "");
    ec.pooling = parse_pooling(get_or<std::string>(cfg, "pooling", to_string(ec.pooling)));

    cfg["layers"] = ec.layers;
    cfg["alphas"] = ec.alphas;
    cfg["positions"] = positions;
    cfg["k"] = ec.k;
    cfg["source_lang"] = ec.source_lang;
    cfg["pooling"] = to_string(ec.pooling);
    run.add_seed("demos", derive_seed(ec.seed, "demos"));
    run.add_seed("compute-samples", derive_seed(ec.seed, "compute-samples"));
    return ec;
}

std::vector<std::string> target_languages(const json& cfg, const ParallelCorpus& corpus, const std::string& source) {
    std::vector<std::string> out;
    if (cfg.contains("target_langs")) {
        out = get_or<std::vector<std::string>>(cfg, "target_langs", {});
    } else if (cfg.contains("target_lang")) {
        out.push_back(get_or<std::string>(cfg, "target_lang", ""));
    } else {
        for (const auto& l : corpus.languages) {
            if (l != source) out.push_back(l);
        }
    }
    if (out.empty()) throw UsageError("no target languages");
    for (const auto& l : out) {
        if (!corpus.has_language(l)) throw ArgumentError("corpus lacks target language '" + l + "'");
    }
    return out;
}

std::string vector_file_name(const SteeringVector& v) {
    return "vectors/" + v.meta.task + "-" + v.meta.source_lang + "-" + v.meta.target_lang + "-L" +
           std::to_string(v.layer) + ".json";
}

std::string stem(const std::string& task, const std::string& lang) { return task + "-" + lang; }

void write_bundle(Run& run, const std::string& prefix, const ReportBundle& bundle, bool with_grid) {
    run.write(prefix + ".json", bundle_to_json(bundle));
    run.write(prefix + ".csv", bundle_csv(bundle));
    if (with_grid) run.write(prefix + "-val.csv", val_table_csv(bundle));
}

ToyTestbedSpec testbed_spec(Run& run) {
    json& cfg = run.cfg();
    ToyTestbedSpec spec = default_testbed_spec();
    const json tb = cfg.contains("testbed") ? cfg["testbed"] : json::object();
    auto field = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        if (!tb.contains(key)) return fallback;
        try {
            return tb.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw UsageError(std::string("testbed field \"") + key + "\" has the wrong type");
        }
    };
    static const std::set<std::string> keys = {
        "dialects", "tokens_per_dialect", "overlap", "question_length", "num_examples", "train_per_dialect",
        "vocab_budget", "num_layers", "hidden_size", "num_heads", "max_seq_len", "k", "episodes",
        "mixed_fraction", "bare_fraction", "steps", "learn_rate", "batch_size", "warmup_steps", "grad_clip"};
    for (const auto& [k, v] : tb.items()) {
        if (!keys.contains(k)) throw UsageError("unknown testbed key \"" + k + "\"");
    }
    DialectSpec& d = spec.dialects;
    d.names = field("dialects", d.names);
    d.tokens_per_dialect = field("tokens_per_dialect", d.tokens_per_dialect);
    d.question_length = field("question_length", d.question_length);
    d.num_examples = field("num_examples", d.num_examples);
    d.train_per_dialect = field("train_per_dialect", d.train_per_dialect);
    d.vocab_budget = field("vocab_budget", d.vocab_budget);
    if (tb.contains("overlap")) {
        d.overlap.assign(d.names.size(), std::vector<double>(d.names.size(), 0.0));
        for (std::size_t i = 0; i < d.names.size(); ++i) d.overlap[i][i] = 1.0;
        for (const auto& e : tb.at("overlap")) {
            const auto a = std::find(d.names.begin(), d.names.end(), e.at("a").get<std::string>());
            const auto b = std::find(d.names.begin(), d.names.end(), e.at("b").get<std::string>());
            if (a == d.names.end() || b == d.names.end()) throw UsageError("overlap names an unknown dialect");
            const auto i = static_cast<std::size_t>(a - d.names.begin());
            const auto j = static_cast<std::size_t>(b - d.names.begin());
            d.overlap[i][j] = d.overlap[j][i] = e.at("value").get<double>();
        }
    } else if (d.names != default_dialect_spec().names) {
        d.overlap.clear();
    }
    d.seed = run.seed();
    spec.model.num_layers = field("num_layers", spec.model.num_layers);
    spec.model.hidden_size = field("hidden_size", spec.model.hidden_size);
    spec.model.num_heads = field("num_heads", spec.model.num_heads);
    spec.model.max_seq_len = field("max_seq_len", spec.model.max_seq_len);
    spec.model.seed = run.seed();
    spec.k = field("k", spec.k);
    spec.episodes = field("episodes", spec.episodes);
    spec.mixed_fraction = field("mixed_fraction", spec.mixed_fraction);
    spec.bare_fraction = field("bare_fraction", spec.bare_fraction);
    spec.train.steps = field("steps", spec.train.steps);
    spec.train.learn_rate = field("learn_rate", spec.train.learn_rate);
    spec.train.batch_size = field("batch_size", spec.train.batch_size);
    spec.train.warmup_steps = field("warmup_steps", spec.train.warmup_steps);
    spec.train.grad_clip = field("grad_clip", spec.train.grad_clip);
    spec.train.seed = run.seed();
    spec.validate();

    json eff;
    eff["dialects"] = d.names;
    eff["tokens_per_dialect"] = d.tokens_per_dialect;
    json ov = json::array();
    for (int i = 0; i < d.num_dialects(); ++i) {
        for (int j = i + 1; j < d.num_dialects(); ++j) {
            if (d.overlap_at(i, j) > 0.0) {
                ov.push_back(json{{"a", d.names[static_cast<std::size_t>(i)]},
                                  {"b", d.names[static_cast<std::size_t>(j)]},
                                  {"value", d.overlap_at(i, j)}});
            }
        }
    }
    eff["overlap"] = ov;
    eff["question_length"] = d.question_length;
    eff["num_examples"] = d.num_examples;
    eff["train_per_dialect"] = d.train_per_dialect;
    eff["vocab_budget"] = d.vocab_budget;
    eff["num_layers"] = spec.model.num_layers;
    eff["hidden_size"] = spec.model.hidden_size;
    eff["num_heads"] = spec.model.num_heads;
    eff["max_seq_len"] = spec.model.max_seq_len;
    eff["k"] = spec.k;
    eff["episodes"] = spec.episodes;
    eff["mixed_fraction"] = spec.mixed_fraction;
    eff["bare_fraction"] = spec.bare_fraction;
    eff["steps"] = spec.train.steps;
    eff["learn_rate"] = spec.train.learn_rate;
    eff["batch_size"] = spec.train.batch_size;
    eff["warmup_steps"] = spec.train.warmup_steps;
    eff["grad_clip"] = spec.train.grad_clip;
    cfg["testbed"] = eff;
    return spec;
}

void write_dialect_data(Run& run, const ToyTestbed& data) {
    for (DialectTask task : {DialectTask::Reverse, DialectTask::Copy}) {
        const DialectCorpus& dc = data.corpus_for(task);
        run.write_with(to_string(task) + ".jsonl", [&](const fs::path& p) { save_parallel_corpus(dc.corpus, p); });
    }
    json lex;
    const DialectLexicon& l = data.reverse.lexicon;
    for (std::size_t i = 0; i < l.names.size(); ++i) lex[l.names[i]] = l.blocks[i];
    json jac;
    for (std::size_t i = 0; i < l.names.size(); ++i) {
        for (std::size_t j = i + 1; j < l.names.size(); ++j) {
            jac[l.names[i] + "-" + l.names[j]] = l.jaccard(static_cast<int>(i), static_cast<int>(j));
        }
    }
    run.write("lexicon.json", json{{"blocks", lex}, {"jaccard", jac}, {"vocab", data.vocab.symbols()}}.dump(2) + "\n");
}

void cmd_make_dialects(Run& run) {
    const ToyTestbedSpec spec = testbed_spec(run);
    const ToyTestbed data = build_testbed_data(spec.dialects);
    write_dialect_data(run, data);
    run.out() << "wrote " << data.reverse.corpus.examples.size() << " parallel examples per task over "
              << data.reverse.lexicon.names.size() << " dialects to " << run.out_dir().string() << "\n";
}

void cmd_train_toy(Run& run) {
    ToyTestbedSpec spec = testbed_spec(run);
    run.add_seed("episodes", derive_seed(run.seed(), "episodes"));
    run.add_seed("init", derive_seed(run.seed(), "init"));
    const ToyTestbed data = build_testbed_data(spec.dialects);
    spec.train.log_every = 100;
    spec.train.on_progress = [&](int step, double loss) {
        run.err() << "step " << step << " loss " << loss << "\n";
    };
    TrainStats stats;
    const ToyModel model = train_testbed_model(data, spec, &stats);
    run.write_with("model.bin", [&](const fs::path& p) { save_model(model, p); });
    write_dialect_data(run, data);
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < stats.batch_losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, stats.batch_losses[i]);
        csv += buf;
    }
    run.write("train_loss.csv", csv);
    run.out() << "trained " << model.id() << " for " << spec.train.steps << " steps\n";
}

void cmd_extract(Run& run) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    const bool dumps = get_or(run.cfg(), "export_dumps", false);
    for (const auto& lang : target_languages(run.cfg(), ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        const PooledPair states =
            extract_pooled_states(*ws->evaluator, ec, ws->split.compute_ids, ec.pooling, run.workers());
        for (const auto& [layer, source] : states.source) {
            SteeringVector v = compute_language_vector(source, states.target.at(layer));
            v.meta.task = ec.task;
            v.meta.seed = ec.seed;
            run.write_with(vector_file_name(v), [&](const fs::path& p) { save_vector(v, p); });
            if (dumps) {
                const std::string base = "dumps/" + ec.task + "-L" + std::to_string(layer) + "-";
                run.write_with(base + ec.source_lang + "-for-" + lang + ".lvad",
                               [&](const fs::path& p) { export_activation_dump(source, p); });
                run.write_with(base + lang + ".lvad",
                               [&](const fs::path& p) { export_activation_dump(states.target.at(layer), p); });
            }
        }
        run.out() << "extracted " << states.source.size() << " vectors for " << lang << "\n";
    }
}

SteeringVector vector_for_plan(Run& run, Workspace& ws, ExperimentConfig ec, int layer) {
    if (run.cfg().contains("vector")) {
        SteeringVector v = load_vector(run.cfg()["vector"].get<std::string>());
        if (v.layer != layer) {
            throw ArgumentError("vector file holds layer " + std::to_string(v.layer) + ", plan asks for " +
                                std::to_string(layer));
        }
        return v;
    }
    ec.layers = {layer};
    return extract_vectors(*ws.evaluator, ec, ws.split.compute_ids, ec.pooling, run.workers()).at(layer);
}

void cmd_steer_eval(Run& run) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    json& cfg = run.cfg();
    if (!cfg.contains("layer") || !cfg.contains("alpha") || !cfg.contains("position")) {
        throw UsageError("steer-eval needs a layer, alpha and position (--layer, --alpha, --position)");
    }
    const int layer = get_or(cfg, "layer", 0);
    const double alpha = get_or(cfg, "alpha", 0.0);
    const PositionMode mode = parse_position_mode(get_or<std::string>(cfg, "position", ""));
    const std::string part_name = get_or<std::string>(cfg, "part", "test");
    SplitPart part = SplitPart::Test;
    if (part_name == "val") {
        part = SplitPart::Val;
    } else if (part_name == "compute") {
        part = SplitPart::Compute;
    } else if (part_name != "test") {
        throw UsageError("part must be compute, val or test");
    }
    std::vector<ReportBundle> bundles;
    for (const auto& lang : target_languages(cfg, ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        const SteeringVector v = vector_for_plan(run, *ws, ec, layer);
        const auto recipe = ec.recipe(RecipeKind::Baseline);
        const EvalReport base = ws->evaluator->evaluate(part, recipe, std::nullopt, "B", run.workers());
        const EvalReport steered =
            ws->evaluator->evaluate(part, recipe, make_plan(v, alpha, mode), "Ours", run.workers());
        ReportBundle b;
        b.language = lang;
        b.task = ec.task;
        b.rows = {row_from(base), row_from(steered)};
        b.reports = {base, steered};
        write_bundle(run, "steer-" + stem(ec.task, lang), b, false);
        bundles.push_back(std::move(b));
    }
    run.out() << render_report(bundles);
}

ReportBundle grid_bundle(Run& run, Workspace& ws, const ExperimentConfig& ec) {
    const Pipeline p{*ws.evaluator, ec, run.workers()};
    const EvalReport b = run_baseline(BaselineKind::B, p);
    std::optional<EvalReport> mfs;
    if (ws.corpus.languages.size() >= 2) mfs = run_baseline(BaselineKind::MFS, p);
    const OursResult ours = run_ours(p);
    const EvalReport oracle = run_baseline(BaselineKind::Oracle, p);

    for (const auto& [layer, v] : ours.vectors) {
        run.write_with(vector_file_name(v), [&](const fs::path& path) { save_vector(v, path); });
    }
    ReportBundle bundle;
    bundle.language = ec.target_lang;
    bundle.task = ec.task;
    bundle.rows.push_back(row_from(b, ours.grid.baseline_val.accuracy));
    bundle.reports.push_back(b);
    if (mfs) {
        bundle.rows.push_back(row_from(*mfs));
        bundle.reports.push_back(*mfs);
    }
    add_grid(bundle, ours.grid);
    bundle.rows.push_back(row_from(oracle));
    bundle.reports.push_back(oracle);
    return bundle;
}

void cmd_grid(Run& run) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    std::vector<ReportBundle> bundles;
    for (const auto& lang : target_languages(run.cfg(), ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        ReportBundle b = grid_bundle(run, *ws, ec);
        write_bundle(run, "report-" + stem(ec.task, lang), b, true);
        bundles.push_back(std::move(b));
    }
    const std::string table = render_report(bundles);
    run.write("table.txt", table);
    run.out() << table;
}

void cmd_baseline(Run& run, const Flags& flags) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    std::vector<std::string> kinds = flags.kinds;
    if (kinds.empty()) kinds = get_or<std::vector<std::string>>(run.cfg(), "baselines", {"B", "MFS", "OR", "Random"});
    std::vector<BaselineKind> parsed;
    for (const auto& k : kinds) {
        try {
            parsed.push_back(parse_baseline_kind(k));
        } catch (const ArgumentError& e) {
            throw UsageError(e.what());
        }
    }
    run.cfg()["baselines"] = kinds;
    std::vector<ReportBundle> bundles;
    for (const auto& lang : target_languages(run.cfg(), ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        const Pipeline p{*ws->evaluator, ec, run.workers()};
        ReportBundle b;
        b.language = lang;
        b.task = ec.task;
        for (BaselineKind k : parsed) {
            const EvalReport r = run_baseline(k, p);
            b.rows.push_back(row_from(r));
            b.reports.push_back(r);
        }
        write_bundle(run, "baseline-" + stem(ec.task, lang), b, false);
        bundles.push_back(std::move(b));
    }
    run.out() << render_report(bundles);
}

std::string ct_percent(const EvalReport& r) { return fmt::percent(r.accuracy); }

void cmd_transfer(Run& run) {
    auto target = open_workspace(run);
    auto source = open_workspace(run, "source_corpus", "source_task", "source_template");
    ExperimentConfig ec = experiment_config(run);
    ExperimentConfig src_ec = ec;
    src_ec.task = source->tmpl.name;
    std::vector<ReportBundle> bundles;
    for (const auto& lang : target_languages(run.cfg(), target->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        src_ec.target_lang = lang;
        if (!source->corpus.has_language(lang)) throw ArgumentError("source task corpus lacks '" + lang + "'");
        const OursResult from = run_ours(Pipeline{*source->evaluator, src_ec, run.workers()});
        const Pipeline p{*target->evaluator, ec, run.workers()};
        const EvalReport b = run_baseline(BaselineKind::B, p);
        const OursResult ours = run_ours(p);

        EvalReport ct;
        if (from.grid.selected) {
            const GridPoint hp = *from.grid.selected;
            ct = cross_task_eval(from.vectors.at(hp.layer), hp, *target->evaluator, ec, run.workers());
        } else {
            ct = b;
            ct.label = "CT";
            ct.flags.push_back("no gated config on source task " + src_ec.task);
        }
        ct.flags.push_back("transfer: " +
                           classify_transfer(ct.accuracy, b.accuracy, ours.grid.test_report.accuracy));
        ReportBundle bundle;
        bundle.language = lang;
        bundle.task = ec.task;
        bundle.rows.push_back(row_from(b, ours.grid.baseline_val.accuracy));
        bundle.reports.push_back(b);
        add_grid(bundle, ours.grid);
        bundle.rows.push_back(row_from(ct));
        bundle.reports.push_back(ct);
        write_bundle(run, "transfer-" + src_ec.task + "-to-" + stem(ec.task, lang), bundle, false);
        run.out() << lang << ": B " << ct_percent(b) << "  Ours " << ct_percent(ours.grid.test_report) << "  CT "
                  << ct_percent(ct) << "  (" << ct.flags.back() << ")\n";
        bundles.push_back(std::move(bundle));
    }
}

std::map<std::string, SteeringVector> collect_vectors(Run& run) {
    json& cfg = run.cfg();
    std::map<std::string, SteeringVector> out;
    if (cfg.contains("vector_files")) {
        for (const auto& [lang, p] : cfg["vector_files"].items()) out.emplace(lang, load_vector(p.get<std::string>()));
        return out;
    }
    if (cfg.contains("dumps")) {
        for (const auto& [lang, pair] : cfg["dumps"].items()) {
            const PooledStateSet s = import_activation_dump(pair.at("source").get<std::string>());
            const PooledStateSet t = import_activation_dump(pair.at("target").get<std::string>());
            out.emplace(lang, compute_language_vector(s, t));
        }
        return out;
    }
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    const int layer = get_or(cfg, "cluster_layer", 10);
    cfg["cluster_layer"] = layer;
    ec.layers = {layer};
    for (const auto& lang : target_languages(cfg, ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        SteeringVector v = extract_vectors(*ws->evaluator, ec, ws->split.compute_ids, ec.pooling, run.workers()).at(layer);
        run.write_with(vector_file_name(v), [&](const fs::path& p) { save_vector(v, p); });
        out.emplace(lang, std::move(v));
    }
    return out;
}

void cmd_cluster(Run& run) {
    const Linkage linkage = parse_linkage(get_or<std::string>(run.cfg(), "linkage", "average"));
    run.cfg()["linkage"] = to_string(linkage);
    const auto vectors = collect_vectors(run);
    const DistanceMatrix m = cosine_distance_matrix(vectors);
    const Dendrogram d = agglomerative_cluster(m, linkage);
    run.write("distances.csv", distance_matrix_csv(m));
    run.write("merges.csv", merges_csv(d));
    run.write("dendrogram.json", d.to_json());
    run.write("dendrogram.nwk", d.to_newick() + "\n");
    run.out() << d.to_newick() << "\n";
}

void cmd_norms(Run& run) {
    const auto rows = norm_table(collect_vectors(run));
    const std::string csv = norm_table_csv(rows);
    run.write("norms.csv", csv);
    run.out() << csv;
}

void cmd_sensitivity(Run& run) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    const auto fractions = get_or(run.cfg(), "fractions", kDefaultFractions);
    run.cfg()["fractions"] = fractions;
    run.add_seed("sensitivity", derive_seed(run.seed(), "sensitivity"));
    for (const auto& lang : target_languages(run.cfg(), ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        const SensitivityCurve c = sensitivity_sweep(fractions, Pipeline{*ws->evaluator, ec, run.workers()}, run.seed());
        const std::string csv = sensitivity_csv(c);
        run.write("sensitivity-" + stem(ec.task, lang) + ".csv", csv);
        run.out() << lang << "\n" << csv;
    }
}

void cmd_ablate_pooling(Run& run) {
    auto ws = open_workspace(run);
    ExperimentConfig ec = experiment_config(run);
    std::vector<PoolingAblationRow> rows;
    for (const auto& lang : target_languages(run.cfg(), ws->corpus, ec.source_lang)) {
        ec.target_lang = lang;
        rows.push_back(pooling_ablation(Pipeline{*ws->evaluator, ec, run.workers()}));
    }
    const std::string csv = pooling_ablation_csv(rows);
    run.write("pooling_ablation-" + ec.task + ".csv", csv);
    run.out() << csv;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Language steering vectors: extraction, steered evaluation and analysis", "langsteer"};
    app.require_subcommand(1);
    Flags flags;

    auto common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", flags.config, "JSON run configuration (or a manifest to replay)")->required();
        sub->add_option("--seed", flags.seed, "root seed, overrides the config");
        sub->add_option("--workers", flags.workers, "parallel workers (never changes outputs)");
        if (needs_out) sub->add_option("--out", flags.out, "output directory");
    };
    auto steering_flags = [&](CLI::App* sub) {
        sub->add_option("--layer", flags.layer, "steering layer (restricts the grid to it)");
        sub->add_option("--alpha", flags.alpha, "steering scale (restricts the grid to it)");
        sub->add_option("--position", flags.position, "on_fewshot, after_fewshot, on_question or entire");
        sub->add_option("--pooling", flags.pooling, "mean or last");
    };

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"train-toy", "train the toy model on the synthetic dialect testbed"},
        {"make-dialects", "write the synthetic dialect corpora"},
        {"extract", "compute steering vectors from the compute split"},
        {"steer-eval", "evaluate one steering plan against the unsteered baseline"},
        {"grid", "gated grid search with B, MFS and OR baselines"},
        {"baseline", "run baselines (B, MFS, OR, Random)"},
        {"transfer", "apply a vector selected on one task to another"},
        {"cluster", "cosine-distance clustering of language vectors"},
        {"norms", "L2 norms of language vectors"},
        {"sensitivity", "compute-set size sensitivity sweep"},
        {"ablate-pooling", "mean vs last-token pooling ablation"},
    };
    std::map<std::string, CLI::App*> apps;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        common(sub, true);
        apps[s.name] = sub;
    }
    for (const char* n : {"extract", "steer-eval", "grid", "baseline", "transfer", "cluster", "norms", "sensitivity",
                          "ablate-pooling"}) {
        steering_flags(apps[n]);
    }
    apps["sensitivity"]->add_option("--fraction-list", flags.fraction_list, "comma-separated fractions in (0, 1]");
    apps["baseline"]->add_option("--kind", flags.kinds, "baseline kinds to run");
    CLI::App* report = app.add_subcommand("report", "render report files as a B | MFS | Ours | OR table");
    report->add_option("files", flags.reports, "report JSON files")->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        CLI::App* failed = &app;
        for (auto* sub : app.get_subcommands()) failed = sub;
        err << failed->help();
        return kExitUsage;
    }

    try {
        if (report->parsed()) {
            std::vector<ReportBundle> bundles;
            for (const auto& f : flags.reports) bundles.push_back(load_bundle(f));
            out << render_report(bundles);
            return kExitOk;
        }
        CLI::App* chosen = app.get_subcommands().front();
        const std::string command = chosen->get_name();
        json cfg = load_config(flags);
        int workers = flags.workers ? *flags.workers : get_or(cfg, "workers", 1);
        if (workers < 1) throw UsageError("--workers must be >= 1");
        fs::path out_dir;
        if (flags.out) {
            out_dir = fs::absolute(*flags.out).lexically_normal();
        } else if (cfg.contains("out")) {
            out_dir = cfg["out"].get<std::string>();
        } else {
            throw UsageError("no output directory (pass --out or set \"out\" in the config)");
        }
        Run run(command, std::move(cfg), out_dir, workers, out, err);
        if (command == "train-toy") {
            cmd_train_toy(run);
        } else if (command == "make-dialects") {
            cmd_make_dialects(run);
        } else if (command == "extract") {
            cmd_extract(run);
        } else if (command == "steer-eval") {
            cmd_steer_eval(run);
        } else if (command == "grid") {
            cmd_grid(run);
        } else if (command == "baseline") {
            cmd_baseline(run, flags);
        } else if (command == "transfer") {
            cmd_transfer(run);
        } else if (command == "cluster") {
            cmd_cluster(run);
        } else if (command == "norms") {
            cmd_norms(run);
        } else if (command == "sensitivity") {
            cmd_sensitivity(run);
        } else if (command == "ablate-pooling") {
            cmd_ablate_pooling(run);
        }
        run.finish();
        return kExitOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace langsteer
