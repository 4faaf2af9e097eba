#include "langsteer/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "langsteer/errors.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

void ModelConfig::validate() const {
    if (num_layers < 1) throw ArgumentError("num_layers must be >= 1");
    if (hidden_size < 1) throw ArgumentError("hidden_size must be >= 1");
    if (num_heads < 1 || hidden_size % num_heads != 0) {
        throw ArgumentError("num_heads must divide hidden_size");
    }
    if (vocab_size < 1) throw ArgumentError("vocab_size must be >= 1");
    if (max_seq_len < 1) throw ArgumentError("max_seq_len must be >= 1");
}

ModelWeights ModelWeights::zeros(const ModelConfig& c) {
    const auto d = static_cast<std::size_t>(c.hidden_size);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    const auto s = static_cast<std::size_t>(c.max_seq_len);
    const auto f = static_cast<std::size_t>(c.mlp_size());
    ModelWeights w;
    w.tok_emb.assign(v * d, 0.0f);
    w.pos_emb.assign(s * d, 0.0f);
    w.blocks.resize(static_cast<std::size_t>(c.num_layers));
    for (BlockWeights& b : w.blocks) {
        b.ln1_gamma.assign(d, 0.0f);
        b.ln1_beta.assign(d, 0.0f);
        b.w_qkv.assign(d * 3 * d, 0.0f);
        b.b_qkv.assign(3 * d, 0.0f);
        b.w_out.assign(d * d, 0.0f);
        b.b_out.assign(d, 0.0f);
        b.ln2_gamma.assign(d, 0.0f);
        b.ln2_beta.assign(d, 0.0f);
        b.w_fc.assign(d * f, 0.0f);
        b.b_fc.assign(f, 0.0f);
        b.w_proj.assign(f * d, 0.0f);
        b.b_proj.assign(d, 0.0f);
    }
    w.lnf_gamma.assign(d, 0.0f);
    w.lnf_beta.assign(d, 0.0f);
    w.w_head.assign(d * v, 0.0f);
    return w;
}

namespace {

template <typename Ref, typename W>
std::vector<Ref> collect_params(W& w, const ModelConfig& c) {
    const auto d = static_cast<std::size_t>(c.hidden_size);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    const auto s = static_cast<std::size_t>(c.max_seq_len);
    const auto f = static_cast<std::size_t>(c.mlp_size());
    std::vector<Ref> out;
    out.push_back({"tok_emb", {v, d}, &w.tok_emb});
    out.push_back({"pos_emb", {s, d}, &w.pos_emb});
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        auto& b = w.blocks[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        out.push_back({p + "ln1.gamma", {d}, &b.ln1_gamma});
        out.push_back({p + "ln1.beta", {d}, &b.ln1_beta});
        out.push_back({p + "attn.w_qkv", {d, 3 * d}, &b.w_qkv});
        out.push_back({p + "attn.b_qkv", {3 * d}, &b.b_qkv});
        out.push_back({p + "attn.w_out", {d, d}, &b.w_out});
        out.push_back({p + "attn.b_out", {d}, &b.b_out});
        out.push_back({p + "ln2.gamma", {d}, &b.ln2_gamma});
        out.push_back({p + "ln2.beta", {d}, &b.ln2_beta});
        out.push_back({p + "mlp.w_fc", {d, f}, &b.w_fc});
        out.push_back({p + "mlp.b_fc", {f}, &b.b_fc});
        out.push_back({p + "mlp.w_proj", {f, d}, &b.w_proj});
        out.push_back({p + "mlp.b_proj", {d}, &b.b_proj});
    }
    out.push_back({"ln_f.gamma", {d}, &w.lnf_gamma});
    out.push_back({"ln_f.beta", {d}, &w.lnf_beta});
    out.push_back({"head.weight", {d, v}, &w.w_head});
    std::sort(out.begin(), out.end(), [](const Ref& a, const Ref& b) { return a.name < b.name; });
    return out;
}

}  // namespace

std::vector<ParamRef> named_params(ModelWeights& weights, const ModelConfig& config) {
    return collect_params<ParamRef>(weights, config);
}

std::vector<ConstParamRef> named_params(const ModelWeights& weights, const ModelConfig& config) {
    return collect_params<ConstParamRef>(weights, config);
}

ToyModel::ToyModel(ModelConfig config, Vocab vocab, ModelWeights weights)
    : config_(config), vocab_(std::move(vocab)), weights_(std::move(weights)) {
    config_.validate();
    if (vocab_.size() != static_cast<std::size_t>(config_.vocab_size)) {
        throw IntegrityError("vocabulary has " + std::to_string(vocab_.size()) +
                             " symbols but config declares vocab_size=" +
                             std::to_string(config_.vocab_size));
    }
    if (weights_.blocks.size() != static_cast<std::size_t>(config_.num_layers)) {
        throw IntegrityError("weights hold " + std::to_string(weights_.blocks.size()) +
                             " blocks, config declares " + std::to_string(config_.num_layers));
    }
    std::uint64_t h = fnv1a64("LVTM");
    const std::int64_t header[] = {config_.num_layers, config_.hidden_size, config_.num_heads,
                                   config_.vocab_size, config_.max_seq_len};
    h = fnv1a64(std::as_bytes(std::span(header)), h);
    for (const auto& s : vocab_.symbols()) h = fnv1a64(s + '\0', h);
    for (const auto& p : named_params(weights_, config_)) {
        std::size_t expected = 1;
        for (std::size_t dim : p.shape) expected *= dim;
        if (p.values->size() != expected) {
            throw IntegrityError("tensor " + p.name + " has " + std::to_string(p.values->size()) +
                                 " values, expected " + std::to_string(expected));
        }
        for (float x : *p.values) {
            if (!std::isfinite(x)) throw IntegrityError("tensor " + p.name + " holds a non-finite value");
        }
        h = fnv1a64(p.name, h);
        h = fnv1a64(std::as_bytes(std::span(*p.values)), h);
    }
    hash_ = h;
}

std::string ToyModel::id() const { return "toy-" + hex64(hash_); }

ModelWeights init_weights(const ModelConfig& config) {
    config.validate();
    ModelWeights w = ModelWeights::zeros(config);
    std::mt19937_64 gen(derive_seed(config.seed, "init"));
    std::normal_distribution<float> normal(0.0f, 0.02f);
    const float proj_std = 0.02f / std::sqrt(2.0f * static_cast<float>(config.num_layers));
    std::normal_distribution<float> proj_normal(0.0f, proj_std);
    for (auto& p : named_params(w, config)) {
        const std::string& n = p.name;
        const bool gain = n.ends_with(".gamma");
        const bool bias = n.ends_with(".beta") || n.find(".b_") != std::string::npos;
        for (float& x : *p.values) {
            if (gain) {
                x = 1.0f;
            } else if (bias) {
                x = 0.0f;
            } else if (n.ends_with("w_out") || n.ends_with("w_proj")) {
                x = proj_normal(gen);
            } else {
                x = normal(gen);
            }
        }
    }
    return w;
}

}  // namespace langsteer
