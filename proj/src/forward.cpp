#include "langsteer/forward.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "langsteer/errors.hpp"

namespace langsteer {
namespace {

// Per-layer position -> offset vector, with scales pre-summed per delta.
class CompiledInterventions {
public:
    CompiledInterventions(const ToyModel& model, std::span<const InterventionSpec> specs,
                          std::size_t addressable) {
        const auto& c = model.config();
        const auto d = static_cast<std::size_t>(c.hidden_size);
        layers_.resize(static_cast<std::size_t>(c.num_layers) + 1);

        struct Group {
            const std::vector<float>* delta;
            std::map<std::size_t, double> scale_at;
        };
        std::vector<std::vector<Group>> groups(layers_.size());

        for (const InterventionSpec& s : specs) {
            if (s.layer < 1 || s.layer > c.num_layers) {
                throw ArgumentError("intervention layer " + std::to_string(s.layer) + " outside [1, " +
                                    std::to_string(c.num_layers) + "]");
            }
            if (s.delta.size() != d) {
                throw ArgumentError("intervention delta has length " + std::to_string(s.delta.size()) +
                                    ", model hidden size is " + std::to_string(d));
            }
            if (!std::isfinite(s.scale)) throw ArgumentError("intervention scale is not finite");
            for (float x : s.delta) {
                if (!std::isfinite(x)) throw ArgumentError("intervention delta holds a non-finite value");
            }
            for (std::size_t p : s.positions) {
                if (p >= addressable) {
                    throw ArgumentError("intervention position " + std::to_string(p) +
                                        " outside prompt of length " + std::to_string(addressable));
                }
            }
            auto& gs = groups[static_cast<std::size_t>(s.layer)];
            auto it = std::find_if(gs.begin(), gs.end(), [&](const Group& g) {
                return std::equal(g.delta->begin(), g.delta->end(), s.delta.begin(), s.delta.end(),
                                  [](float a, float b) {
                                      return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
                                  });
            });
            if (it == gs.end()) {
                gs.push_back({&s.delta, {}});
                it = std::prev(gs.end());
            }
            for (std::size_t p : s.positions) it->scale_at[p] += s.scale;
        }

        for (std::size_t l = 1; l < layers_.size(); ++l) {
            auto& layer = layers_[l];
            for (const Group& g : groups[l]) {
                for (const auto& [pos, scale] : g.scale_at) {
                    const float a = static_cast<float>(scale);
                    auto [slot, fresh] = layer.emplace(pos, std::vector<float>(d));
                    std::vector<float>& off = slot->second;
                    for (std::size_t i = 0; i < d; ++i) {
                        const float term = a * (*g.delta)[i];
                        off[i] = fresh ? term : off[i] + term;
                    }
                }
            }
        }
    }

    const std::vector<float>* offset(int layer, std::size_t pos) const {
        const auto& m = layers_[static_cast<std::size_t>(layer)];
        auto it = m.find(pos);
        return it == m.end() ? nullptr : &it->second;
    }

private:
    std::vector<std::map<std::size_t, std::vector<float>>> layers_;
};

// Incremental forward state: keys and values cached per layer.
class Session {
public:
    Session(const ToyModel& model, const CompiledInterventions& iv)
        : model_(model), iv_(iv), c_(model.config()) {
        const auto d = static_cast<std::size_t>(c_.hidden_size);
        const auto s = static_cast<std::size_t>(c_.max_seq_len);
        keys_.assign(static_cast<std::size_t>(c_.num_layers), Matrix(s, d));
        values_.assign(static_cast<std::size_t>(c_.num_layers), Matrix(s, d));
    }

    std::size_t length() const { return len_; }

    // Runs `tokens` at positions [len, len + n). Returns final hidden states
    // (after the last block, before the final norm) for the new rows.
    Matrix append(std::span<const TokenId> tokens, const std::set<int>& capture,
                  std::map<int, ActivationTrace>* traces) {
        const auto d = static_cast<std::size_t>(c_.hidden_size);
        const auto v = static_cast<std::size_t>(c_.vocab_size);
        const std::size_t m = tokens.size();
        const std::size_t n0 = len_;
        if (n0 + m > static_cast<std::size_t>(c_.max_seq_len)) {
            throw CapacityError("sequence of length " + std::to_string(n0 + m) + " exceeds max_seq_len " +
                                std::to_string(c_.max_seq_len));
        }
        const ModelWeights& w = model_.weights();

        Matrix x(m, d);
        for (std::size_t i = 0; i < m; ++i) {
            const TokenId t = tokens[i];
            if (t < 0 || static_cast<std::size_t>(t) >= v) {
                throw ArgumentError("token id " + std::to_string(t) + " outside vocabulary");
            }
            const float* te = w.tok_emb.data() + static_cast<std::size_t>(t) * d;
            const float* pe = w.pos_emb.data() + (n0 + i) * d;
            float* xr = x.row(i);
            for (std::size_t j = 0; j < d; ++j) xr[j] = te[j] + pe[j];
        }

        Matrix normed(m, d), qkv(m, 3 * d), att(m, d), proj(m, d);
        Matrix hidden(m, static_cast<std::size_t>(c_.mlp_size()));
        const auto heads = static_cast<std::size_t>(c_.num_heads);
        const auto hd = static_cast<std::size_t>(c_.head_dim());
        const float inv_scale = 1.0f / std::sqrt(static_cast<float>(hd));
        std::vector<float> scores(n0 + m);

        for (int layer = 1; layer <= c_.num_layers; ++layer) {
            const BlockWeights& b = w.blocks[static_cast<std::size_t>(layer - 1)];
            Matrix& kc = keys_[static_cast<std::size_t>(layer - 1)];
            Matrix& vc = values_[static_cast<std::size_t>(layer - 1)];

            detail::layer_norm(x.data.data(), m, d, b.ln1_gamma.data(), b.ln1_beta.data(), normed.data.data());
            detail::linear(normed.data.data(), m, d, b.w_qkv.data(), 3 * d, b.b_qkv.data(), qkv.data.data());
            for (std::size_t i = 0; i < m; ++i) {
                std::copy_n(qkv.row(i) + d, d, kc.row(n0 + i));
                std::copy_n(qkv.row(i) + 2 * d, d, vc.row(n0 + i));
            }
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t span = n0 + i + 1;
                float* out = att.row(i);
                std::fill_n(out, d, 0.0f);
                for (std::size_t h = 0; h < heads; ++h) {
                    const float* q = qkv.row(i) + h * hd;
                    float mx = -std::numeric_limits<float>::infinity();
                    for (std::size_t j = 0; j < span; ++j) {
                        const float* k = kc.row(j) + h * hd;
                        float s = 0.0f;
                        for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
                        s *= inv_scale;
                        scores[j] = s;
                        mx = std::max(mx, s);
                    }
                    float total = 0.0f;
                    for (std::size_t j = 0; j < span; ++j) {
                        scores[j] = std::exp(scores[j] - mx);
                        total += scores[j];
                    }
                    const float inv_total = 1.0f / total;
                    float* o = out + h * hd;
                    for (std::size_t j = 0; j < span; ++j) {
                        const float p = scores[j] * inv_total;
                        const float* val = vc.row(j) + h * hd;
                        for (std::size_t e = 0; e < hd; ++e) o[e] += p * val[e];
                    }
                }
            }
            detail::linear(att.data.data(), m, d, b.w_out.data(), d, b.b_out.data(), proj.data.data());
            for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += proj.data[k];

            const auto f = static_cast<std::size_t>(c_.mlp_size());
            detail::layer_norm(x.data.data(), m, d, b.ln2_gamma.data(), b.ln2_beta.data(), normed.data.data());
            detail::linear(normed.data.data(), m, d, b.w_fc.data(), f, b.b_fc.data(), hidden.data.data());
            for (float& z : hidden.data) z = detail::gelu(z);
            detail::linear(hidden.data.data(), m, f, b.w_proj.data(), d, b.b_proj.data(), proj.data.data());
            for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += proj.data[k];

            for (std::size_t i = 0; i < m; ++i) {
                if (const auto* off = iv_.offset(layer, n0 + i)) {
                    float* xr = x.row(i);
                    for (std::size_t j = 0; j < d; ++j) xr[j] += (*off)[j];
                }
            }
            if (traces && capture.contains(layer)) {
                ActivationTrace& tr = (*traces)[layer];
                tr.layer = layer;
                if (tr.states.cols != d) tr.states = Matrix(0, d);
                tr.states.data.insert(tr.states.data.end(), x.data.begin(), x.data.end());
                tr.states.rows += m;
            }
        }
        len_ += m;
        return x;
    }

    // Logits for every row of `final_hidden`.
    Matrix logits(const Matrix& final_hidden) const {
        const auto d = static_cast<std::size_t>(c_.hidden_size);
        const auto v = static_cast<std::size_t>(c_.vocab_size);
        const ModelWeights& w = model_.weights();
        Matrix normed(final_hidden.rows, d);
        detail::layer_norm(final_hidden.data.data(), final_hidden.rows, d, w.lnf_gamma.data(),
                           w.lnf_beta.data(), normed.data.data());
        Matrix out(final_hidden.rows, v);
        detail::linear(normed.data.data(), normed.rows, d, w.w_head.data(), v, nullptr, out.data.data());
        return out;
    }

private:
    const ToyModel& model_;
    const CompiledInterventions& iv_;
    const ModelConfig& c_;
    std::vector<Matrix> keys_, values_;
    std::size_t len_ = 0;
};

Matrix last_row(const Matrix& m) {
    Matrix out(1, m.cols);
    std::copy_n(m.row(m.rows - 1), m.cols, out.row(0));
    return out;
}

TokenId argmax(std::span<const float> logits) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j) {
        if (logits[j] > logits[best]) best = j;
    }
    return static_cast<TokenId>(best);
}

}  // namespace

ForwardResult forward_with_interventions(const ToyModel& model, std::span<const TokenId> tokens,
                                         std::span<const InterventionSpec> interventions,
                                         const std::set<int>& capture_layers) {
    const auto& c = model.config();
    if (tokens.empty()) throw ArgumentError("forward needs at least one token");
    if (tokens.size() > static_cast<std::size_t>(c.max_seq_len)) {
        throw CapacityError("sequence of length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                            std::to_string(c.max_seq_len));
    }
    for (int l : capture_layers) {
        if (l < 1 || l > c.num_layers) throw ArgumentError("capture layer " + std::to_string(l) + " out of range");
    }
    CompiledInterventions iv(model, interventions, tokens.size());
    Session session(model, iv);
    ForwardResult result;
    const Matrix final_hidden = session.append(tokens, capture_layers, &result.traces);
    result.logits = session.logits(final_hidden);
    return result;
}

std::vector<TokenId> generate(const ToyModel& model, std::span<const TokenId> prompt,
                              std::span<const InterventionSpec> interventions, int max_new_tokens,
                              std::optional<TokenId> stop_token) {
    const auto& c = model.config();
    if (prompt.empty()) throw ArgumentError("generation needs a non-empty prompt");
    if (max_new_tokens < 0) throw ArgumentError("max_new_tokens must be >= 0");
    if (prompt.size() + static_cast<std::size_t>(max_new_tokens) > static_cast<std::size_t>(c.max_seq_len)) {
        throw CapacityError("prompt length " + std::to_string(prompt.size()) + " + " +
                            std::to_string(max_new_tokens) + " new tokens exceeds max_seq_len " +
                            std::to_string(c.max_seq_len));
    }
    CompiledInterventions iv(model, interventions, prompt.size());
    std::vector<TokenId> out;
    if (max_new_tokens == 0) return out;

    Session session(model, iv);
    Matrix hidden = session.append(prompt, {}, nullptr);
    Matrix logits = session.logits(last_row(hidden));
    for (int step = 0; step < max_new_tokens; ++step) {
        const TokenId next = argmax(logits.row_span(0));
        out.push_back(next);
        if (stop_token && next == *stop_token) break;
        if (step + 1 == max_new_tokens) break;
        const TokenId one[] = {next};
        hidden = session.append(one, {}, nullptr);
        logits = session.logits(hidden);
    }
    return out;
}

}  // namespace langsteer
