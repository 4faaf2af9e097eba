#include "langsteer/steering.hpp"

#include <cmath>

#include "langsteer/errors.hpp"
#include "langsteer/parallel.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

std::string to_string(Pooling p) { return p == Pooling::Mean ? "mean" : "last"; }

Pooling parse_pooling(const std::string& text) {
    if (text == "mean") return Pooling::Mean;
    if (text == "last") return Pooling::Last;
    throw ArgumentError("unknown pooling '" + text + "' (expected mean or last)");
}

std::string to_string(PositionMode m) {
    switch (m) {
        case PositionMode::OnFewshot: return "on_fewshot";
        case PositionMode::AfterFewshot: return "after_fewshot";
        case PositionMode::OnQuestion: return "on_question";
        case PositionMode::Entire: return "entire";
    }
    return "?";
}

PositionMode parse_position_mode(const std::string& text) {
    for (PositionMode m : kAllPositionModes) {
        if (to_string(m) == text) return m;
    }
    throw ArgumentError("unknown position mode '" + text + "'");
}

std::vector<float> pool_trace(const Matrix& states, Pooling pooling) {
    if (states.rows == 0) throw ArgumentError("cannot pool an empty trace");
    std::vector<float> out(states.cols);
    if (pooling == Pooling::Last) {
        const float* r = states.row(states.rows - 1);
        std::copy(r, r + states.cols, out.begin());
        return out;
    }
    std::vector<double> acc(states.cols, 0.0);
    for (std::size_t i = 0; i < states.rows; ++i) {
        const float* r = states.row(i);
        for (std::size_t j = 0; j < states.cols; ++j) acc[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(states.rows);
    for (std::size_t j = 0; j < states.cols; ++j) out[j] = static_cast<float>(acc[j] * inv);
    return out;
}

std::map<int, PooledStateSet> pooled_hidden_states_multi(const ToyModel& model, const std::vector<std::string>& texts,
                                                         const std::set<int>& layers, Pooling pooling,
                                                         std::string lang, int workers) {
    const auto& c = model.config();
    if (texts.empty()) throw ArgumentError("no texts to pool");
    if (layers.empty()) throw ArgumentError("no layers requested");
    for (int l : layers) {
        if (l < 1 || l > c.num_layers) {
            throw ArgumentError("layer " + std::to_string(l) + " outside [1, " + std::to_string(c.num_layers) + "]");
        }
    }
    std::vector<std::vector<TokenId>> tokenized(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        tokenized[i] = model.vocab().tokenize(texts[i]);
        if (tokenized[i].empty()) throw ArgumentError("text " + std::to_string(i) + " tokenizes to length 0");
    }

    const auto d = static_cast<std::size_t>(c.hidden_size);
    std::map<int, PooledStateSet> out;
    for (int l : layers) {
        PooledStateSet& s = out[l];
        s.layer = l;
        s.states = Matrix(texts.size(), d);
        s.lang = lang;
        s.pooling = pooling;
        s.model_id = model.id();
        for (const auto& t : texts) s.text_hashes.push_back(fnv1a64(t));
    }
    parallel_for(texts.size(), workers, [&](std::size_t i) {
        const ForwardResult r = forward_with_interventions(model, tokenized[i], {}, layers);
        for (int l : layers) {
            const auto pooled = pool_trace(r.traces.at(l).states, pooling);
            std::copy(pooled.begin(), pooled.end(), out.at(l).states.row(i));
        }
    });
    return out;
}

PooledStateSet pooled_hidden_states(const ToyModel& model, const std::vector<std::string>& texts, int layer,
                                    Pooling pooling, std::string lang, int workers) {
    auto all = pooled_hidden_states_multi(model, texts, {layer}, pooling, std::move(lang), workers);
    return std::move(all.at(layer));
}

SteeringVector compute_language_vector(const PooledStateSet& source, const PooledStateSet& target) {
    if (source.layer != target.layer) throw ArgumentError("pooled states come from different layers");
    if (source.states.rows != target.states.rows) throw ArgumentError("pooled states differ in sample count");
    if (source.states.cols != target.states.cols) throw ArgumentError("pooled states differ in width");
    if (source.pooling != target.pooling) throw ArgumentError("pooled states use different pooling");
    if (source.states.rows == 0) throw ArgumentError("no samples");

    const std::size_t n = source.states.rows, d = source.states.cols;
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const float* s = source.states.row(i);
        const float* t = target.states.row(i);
        for (std::size_t j = 0; j < d; ++j) acc[j] += static_cast<double>(t[j] - s[j]);
    }
    SteeringVector v;
    v.layer = source.layer;
    v.values.resize(d);
    for (std::size_t j = 0; j < d; ++j) v.values[j] = static_cast<float>(acc[j] / static_cast<double>(n));
    v.meta.model_id = !target.model_id.empty() ? target.model_id : source.model_id;
    v.meta.source_lang = source.lang;
    v.meta.target_lang = target.lang;
    v.meta.pooling = source.pooling;
    v.meta.n_samples = n;
    return v;
}

std::vector<std::size_t> resolve_positions(const RenderedPrompt& prompt, PositionMode mode) {
    const std::size_t len = prompt.length();
    if (prompt.system.begin != 0 || prompt.system.end != prompt.fewshot.begin ||
        prompt.fewshot.end != prompt.question.begin || prompt.question.end != len ||
        prompt.fewshot.begin > prompt.fewshot.end || prompt.question.begin > prompt.question.end) {
        throw ArgumentError("prompt spans are not contiguous over [0, len)");
    }
    auto range = [](std::size_t b, std::size_t e) {
        std::vector<std::size_t> out;
        for (std::size_t i = b; i < e; ++i) out.push_back(i);
        return out;
    };
    switch (mode) {
        case PositionMode::OnFewshot: return range(prompt.fewshot.begin, prompt.fewshot.end);
        case PositionMode::AfterFewshot:
            if (prompt.fewshot.end >= len) throw ArgumentError("after_fewshot: no token follows the demonstrations");
            return {prompt.fewshot.end};
        case PositionMode::OnQuestion: return range(prompt.question.begin, prompt.question.end);
        case PositionMode::Entire: return range(0, len);
    }
    throw ArgumentError("bad position mode");
}

SteeringPlan make_plan(const SteeringVector& vector, double alpha, PositionMode mode) {
    if (!std::isfinite(alpha)) throw ArgumentError("alpha must be finite");
    return SteeringPlan{vector.layer, alpha, mode, vector};
}

std::vector<InterventionSpec> plan_interventions(const RenderedPrompt& prompt, const SteeringPlan& plan) {
    if (plan.vector.layer != plan.layer) throw ArgumentError("plan layer differs from vector layer");
    if (!std::isfinite(plan.alpha)) throw ArgumentError("alpha must be finite");
    InterventionSpec spec;
    spec.layer = plan.layer;
    spec.positions = resolve_positions(prompt, plan.mode);
    spec.delta = plan.vector.values;
    spec.scale = plan.alpha;
    if (spec.positions.empty()) return {};
    return {std::move(spec)};
}

std::vector<TokenId> generate(const ToyModel& model, const RenderedPrompt& prompt,
                              const std::optional<SteeringPlan>& plan, int max_new_tokens,
                              std::optional<TokenId> stop_token) {
    std::vector<InterventionSpec> specs;
    if (plan) {
        if (plan->vector.dim() != static_cast<std::size_t>(model.config().hidden_size)) {
            throw ArgumentError("steering vector dim " + std::to_string(plan->vector.dim()) +
                                " differs from model hidden size " + std::to_string(model.config().hidden_size));
        }
        specs = plan_interventions(prompt, *plan);
    }
    return generate(model, std::span<const TokenId>(prompt.tokens), specs, max_new_tokens, stop_token);
}

}  // namespace langsteer
