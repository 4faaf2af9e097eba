#include <algorithm>
#include <cmath>
#include <set>

#include "langsteer/errors.hpp"
#include "langsteer/experiment.hpp"
#include "langsteer/parallel.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

void ExperimentConfig::validate() const {
    if (layers.empty() || alphas.empty() || modes.empty()) throw ArgumentError("grids must be non-empty");
    if (k < 0) throw ArgumentError("k must be >= 0");
    for (int l : layers) {
        if (l < 1) throw ArgumentError("grid layer " + std::to_string(l) + " must be >= 1");
    }
    for (double a : alphas) {
        if (!std::isfinite(a)) throw ArgumentError("alpha grid holds a non-finite value");
    }
    if (target_lang.empty()) throw ArgumentError("target language not set");
}

PromptRecipe ExperimentConfig::recipe(RecipeKind kind) const {
    PromptRecipe r;
    r.kind = kind;
    r.source_lang = source_lang;
    r.target_lang = target_lang;
    r.k = k;
    r.seed = derive_seed(seed, "demos");
    return r;
}

bool tie_break_less(const GridPoint& a, const GridPoint& b) {
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    if (a.layer != b.layer) return a.layer < b.layer;
    return static_cast<int>(a.mode) < static_cast<int>(b.mode);
}

EvalReport RecipeScorer::score(const std::optional<SteeringPlan>& plan, SplitPart part) const {
    return ev_.evaluate(part, recipe_, plan, plan ? label_ : to_string(recipe_.kind), 1);
}

std::optional<GridPoint> select_gated(const std::vector<GridRow>& rows, const Fraction& baseline_val) {
    const GridRow* best = nullptr;
    for (const GridRow& r : rows) {
        if (!(r.val > baseline_val)) continue;
        if (!best || r.val > best->val || (equivalent(r.val, best->val) && tie_break_less(r.point, best->point))) {
            best = &r;
        }
    }
    if (!best) return std::nullopt;
    return best->point;
}

GridSearchResult grid_search(const PlanScorer& scorer, const std::map<int, SteeringVector>& vectors,
                             const ExperimentConfig& config, int workers, const std::string& label) {
    config.validate();
    std::optional<std::size_t> dim;
    for (int l : config.layers) {
        auto it = vectors.find(l);
        if (it == vectors.end()) throw ArgumentError("no steering vector for grid layer " + std::to_string(l));
        if (it->second.layer != l) throw ArgumentError("vector stored under layer " + std::to_string(l) + " is for another layer");
        if (dim && *dim != it->second.dim()) throw ArgumentError("grid vectors differ in dimension");
        dim = it->second.dim();
    }

    GridSearchResult result;
    result.baseline_val = scorer.score(std::nullopt, SplitPart::Val);
    result.baseline_test = scorer.score(std::nullopt, SplitPart::Test);

    for (int l : config.layers) {
        for (double a : config.alphas) {
            for (PositionMode m : config.modes) result.val_table.push_back({{l, a, m}, {}, 0.0});
        }
    }
    parallel_for(result.val_table.size(), workers, [&](std::size_t i) {
        GridRow& row = result.val_table[i];
        const auto plan = make_plan(vectors.at(row.point.layer), row.point.alpha, row.point.mode);
        const EvalReport r = scorer.score(plan, SplitPart::Val);
        row.val = r.accuracy;
        row.val_target_rate = r.target_rate;
    });

    result.selected = select_gated(result.val_table, result.baseline_val.accuracy);
    if (result.selected) {
        result.selected_plan = make_plan(vectors.at(result.selected->layer), result.selected->alpha, result.selected->mode);
        result.test_report = scorer.score(result.selected_plan, SplitPart::Test);
        result.test_report.label = label;
    } else {
        result.test_report = result.baseline_test;
        result.test_report.label = label;
        result.test_report.flags.push_back("no gated config");
    }
    return result;
}

PooledPair extract_pooled_states(const Evaluator& evaluator, const ExperimentConfig& config,
                                 const std::vector<std::string>& compute_ids, Pooling pooling, int workers) {
    config.validate();
    const auto samples = build_compute_samples(evaluator.corpus(), compute_ids, evaluator.task_template(),
                                               config.source_lang, config.target_lang, std::max(config.k, 1),
                                               derive_seed(config.seed, "compute-samples"));
    std::vector<std::string> src, tgt;
    for (const auto& s : samples) {
        src.push_back(s.source_text);
        tgt.push_back(s.target_text);
    }
    const std::set<int> layers(config.layers.begin(), config.layers.end());
    PooledPair out;
    out.source = pooled_hidden_states_multi(evaluator.model(), src, layers, pooling, config.source_lang, workers);
    out.target = pooled_hidden_states_multi(evaluator.model(), tgt, layers, pooling, config.target_lang, workers);
    return out;
}

std::map<int, SteeringVector> extract_vectors(const Evaluator& evaluator, const ExperimentConfig& config,
                                              const std::vector<std::string>& compute_ids, Pooling pooling,
                                              int workers) {
    const PooledPair states = extract_pooled_states(evaluator, config, compute_ids, pooling, workers);
    std::map<int, SteeringVector> out;
    for (const auto& [l, source] : states.source) {
        SteeringVector v = compute_language_vector(source, states.target.at(l));
        v.meta.task = evaluator.task_name();
        v.meta.seed = config.seed;
        out.emplace(l, std::move(v));
    }
    return out;
}

std::map<int, SteeringVector> random_vectors(const ExperimentConfig& config, std::size_t dim) {
    std::map<int, SteeringVector> out;
    for (int l : config.layers) {
        KeyedRng rng(derive_seed(config.seed, "random-vector", {static_cast<std::uint64_t>(l)}));
        SteeringVector v;
        v.layer = l;
        v.values.resize(dim);
        for (float& x : v.values) x = static_cast<float>(rng.normal());
        v.meta.source_lang = config.source_lang;
        v.meta.target_lang = config.target_lang;
        v.meta.task = "random";
        v.meta.seed = config.seed;
        out.emplace(l, std::move(v));
    }
    return out;
}

OursResult run_ours(const Pipeline& pipeline, const std::vector<std::string>& compute_ids, Pooling pooling) {
    OursResult out;
    out.vectors = extract_vectors(pipeline.evaluator, pipeline.config, compute_ids, pooling, pipeline.workers);
    const RecipeScorer scorer(pipeline.evaluator, pipeline.config.recipe(RecipeKind::Baseline), "Ours");
    out.grid = grid_search(scorer, out.vectors, pipeline.config, pipeline.workers, "Ours");
    return out;
}

OursResult run_ours(const Pipeline& pipeline) {
    return run_ours(pipeline, pipeline.evaluator.split().compute_ids, pipeline.config.pooling);
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::B: return "B";
        case BaselineKind::MFS: return "MFS";
        case BaselineKind::Oracle: return "OR";
        case BaselineKind::Random: return "Random";
    }
    return "?";
}

BaselineKind parse_baseline_kind(const std::string& text) {
    if (text == "B" || text == "baseline") return BaselineKind::B;
    if (text == "MFS" || text == "mfs") return BaselineKind::MFS;
    if (text == "OR" || text == "Oracle" || text == "oracle") return BaselineKind::Oracle;
    if (text == "Random" || text == "random") return BaselineKind::Random;
    throw ArgumentError("unknown baseline kind '" + text + "' (expected B, MFS, Oracle or Random)");
}

EvalReport run_baseline(BaselineKind kind, const Pipeline& pipeline) {
    const ExperimentConfig& cfg = pipeline.config;
    cfg.validate();
    switch (kind) {
        case BaselineKind::B:
            return pipeline.evaluator.evaluate(SplitPart::Test, cfg.recipe(RecipeKind::Baseline), std::nullopt, "B",
                                               pipeline.workers);
        case BaselineKind::Oracle:
            return pipeline.evaluator.evaluate(SplitPart::Test, cfg.recipe(RecipeKind::Oracle), std::nullopt, "OR",
                                               pipeline.workers);
        case BaselineKind::MFS:
            return pipeline.evaluator.evaluate(SplitPart::Test, cfg.recipe(RecipeKind::Multilingual), std::nullopt,
                                               "MFS", pipeline.workers);
        case BaselineKind::Random: {
            const auto vectors =
                random_vectors(cfg, static_cast<std::size_t>(pipeline.evaluator.model().config().hidden_size));
            const RecipeScorer scorer(pipeline.evaluator, cfg.recipe(RecipeKind::Baseline), "Random");
            return grid_search(scorer, vectors, cfg, pipeline.workers, "Random").test_report;
        }
    }
    throw ArgumentError("bad baseline kind");
}

EvalReport cross_task_eval(const SteeringVector& vector, const GridPoint& hyperparameters, const Evaluator& target_task,
                           const ExperimentConfig& config, int workers) {
    const auto d = static_cast<std::size_t>(target_task.model().config().hidden_size);
    if (vector.dim() != d) {
        throw ArgumentError("vector dim " + std::to_string(vector.dim()) + " does not match model hidden size " +
                            std::to_string(d));
    }
    if (vector.layer != hyperparameters.layer) throw ArgumentError("hyperparameter layer differs from vector layer");
    if (!target_task.corpus().has_language(config.target_lang)) {
        throw ArgumentError("target task corpus lacks language '" + config.target_lang + "'");
    }
    const auto plan = make_plan(vector, hyperparameters.alpha, hyperparameters.mode);
    return target_task.evaluate(SplitPart::Test, config.recipe(RecipeKind::Baseline), plan, "CT", workers);
}

std::string classify_transfer(const Fraction& ct, const Fraction& baseline, const Fraction& ours) {
    const Fraction& lo = baseline < ours ? baseline : ours;
    const Fraction& hi = baseline < ours ? ours : baseline;
    if (ct < lo) return "transfer_failure";
    if (ct > hi) return "above_band";
    return "within_band";
}

}  // namespace langsteer
