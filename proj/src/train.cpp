#include "langsteer/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/forward.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {
namespace {

using detail::gelu;
using detail::gelu_grad;
using detail::layer_norm;
using detail::linear;

// dx (set), dw (+=), db (+=) for y = x w + b.
void linear_backward(const float* x, std::size_t m, std::size_t in, const float* w, std::size_t out,
                     const float* dy, float* dx, float* dw, float* db) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* dyr = dy + i * out;
        if (dx) {
            float* dxr = dx + i * in;
            for (std::size_t k = 0; k < in; ++k) {
                const float* wr = w + k * out;
                float s = 0.0f;
                for (std::size_t j = 0; j < out; ++j) s += dyr[j] * wr[j];
                dxr[k] = s;
            }
        }
        const float* xr = x + i * in;
        for (std::size_t k = 0; k < in; ++k) {
            const float xv = xr[k];
            float* dwr = dw + k * out;
            for (std::size_t j = 0; j < out; ++j) dwr[j] += xv * dyr[j];
        }
        if (db) {
            for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
        }
    }
}

// dx (+=) for y = layer_norm(x).
void layer_norm_backward(const float* x, std::size_t m, std::size_t d, const float* gamma, const float* mean,
                         const float* rstd, const float* dy, float* dx, float* dgamma, float* dbeta) {
    const float inv_d = 1.0f / static_cast<float>(d);
    for (std::size_t i = 0; i < m; ++i) {
        const float* xr = x + i * d;
        const float* dyr = dy + i * d;
        float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
            const float xhat = (xr[j] - mean[i]) * rstd[i];
            const float dxhat = dyr[j] * gamma[j];
            dgamma[j] += dyr[j] * xhat;
            dbeta[j] += dyr[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        float* dxr = dx + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            const float xhat = (xr[j] - mean[i]) * rstd[i];
            const float dxhat = dyr[j] * gamma[j];
            dxr[j] += rstd[i] * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
}

struct BlockCache {
    std::vector<float> x_in, a1, mean1, rstd1, qkv, probs, att, x_mid, a2, mean2, rstd2, fc_pre, fc_act;
};

class Trainer {
public:
    Trainer(const ModelConfig& c, ModelWeights& w) : c_(c), w_(w) {}

    // Forward + backward for one sequence; accumulates into `grads`.
    // Returns the summed cross-entropy over n-1 predicted positions.
    double accumulate(std::span<const TokenId> tokens, float loss_weight, ModelWeights& g) {
        const std::size_t n = tokens.size();
        const auto d = static_cast<std::size_t>(c_.hidden_size);
        const auto v = static_cast<std::size_t>(c_.vocab_size);
        const auto f = static_cast<std::size_t>(c_.mlp_size());
        const auto heads = static_cast<std::size_t>(c_.num_heads);
        const auto hd = static_cast<std::size_t>(c_.head_dim());
        const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
        const std::size_t layers = w_.blocks.size();

        std::vector<float> x(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            const float* te = w_.tok_emb.data() + static_cast<std::size_t>(tokens[i]) * d;
            const float* pe = w_.pos_emb.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) x[i * d + j] = te[j] + pe[j];
        }

        caches_.resize(layers);
        std::vector<float> tmp(n * d);
        for (std::size_t l = 0; l < layers; ++l) {
            const BlockWeights& b = w_.blocks[l];
            BlockCache& bc = caches_[l];
            bc.x_in = x;
            bc.a1.resize(n * d);
            bc.mean1.resize(n);
            bc.rstd1.resize(n);
            layer_norm(x.data(), n, d, b.ln1_gamma.data(), b.ln1_beta.data(), bc.a1.data(), bc.mean1.data(),
                       bc.rstd1.data());
            bc.qkv.resize(n * 3 * d);
            linear(bc.a1.data(), n, d, b.w_qkv.data(), 3 * d, b.b_qkv.data(), bc.qkv.data());
            bc.probs.assign(heads * n * n, 0.0f);
            bc.att.assign(n * d, 0.0f);
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t i = 0; i < n; ++i) {
                    const float* q = bc.qkv.data() + i * 3 * d + h * hd;
                    float* p = bc.probs.data() + (h * n + i) * n;
                    float mx = -std::numeric_limits<float>::infinity();
                    for (std::size_t j = 0; j <= i; ++j) {
                        const float* k = bc.qkv.data() + j * 3 * d + d + h * hd;
                        float s = 0.0f;
                        for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
                        p[j] = s * scale;
                        mx = std::max(mx, p[j]);
                    }
                    float total = 0.0f;
                    for (std::size_t j = 0; j <= i; ++j) {
                        p[j] = std::exp(p[j] - mx);
                        total += p[j];
                    }
                    const float inv = 1.0f / total;
                    float* o = bc.att.data() + i * d + h * hd;
                    for (std::size_t j = 0; j <= i; ++j) {
                        p[j] *= inv;
                        const float* val = bc.qkv.data() + j * 3 * d + 2 * d + h * hd;
                        for (std::size_t e = 0; e < hd; ++e) o[e] += p[j] * val[e];
                    }
                }
            }
            linear(bc.att.data(), n, d, b.w_out.data(), d, b.b_out.data(), tmp.data());
            for (std::size_t k = 0; k < n * d; ++k) x[k] += tmp[k];
            bc.x_mid = x;
            bc.a2.resize(n * d);
            bc.mean2.resize(n);
            bc.rstd2.resize(n);
            layer_norm(x.data(), n, d, b.ln2_gamma.data(), b.ln2_beta.data(), bc.a2.data(), bc.mean2.data(),
                       bc.rstd2.data());
            bc.fc_pre.resize(n * f);
            linear(bc.a2.data(), n, d, b.w_fc.data(), f, b.b_fc.data(), bc.fc_pre.data());
            bc.fc_act.resize(n * f);
            for (std::size_t k = 0; k < n * f; ++k) bc.fc_act[k] = gelu(bc.fc_pre[k]);
            linear(bc.fc_act.data(), n, f, b.w_proj.data(), d, b.b_proj.data(), tmp.data());
            for (std::size_t k = 0; k < n * d; ++k) x[k] += tmp[k];
        }

        std::vector<float> af(n * d), meanf(n), rstdf(n);
        layer_norm(x.data(), n, d, w_.lnf_gamma.data(), w_.lnf_beta.data(), af.data(), meanf.data(), rstdf.data());
        std::vector<float> logits(n * v);
        linear(af.data(), n, d, w_.w_head.data(), v, nullptr, logits.data());

        double loss = 0.0;
        std::vector<float> dlogits(n * v, 0.0f);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            float* lr = logits.data() + i * v;
            float mx = *std::max_element(lr, lr + v);
            double total = 0.0;
            for (std::size_t j = 0; j < v; ++j) total += std::exp(static_cast<double>(lr[j] - mx));
            const auto target = static_cast<std::size_t>(tokens[i + 1]);
            loss += std::log(total) - static_cast<double>(lr[target] - mx);
            float* dl = dlogits.data() + i * v;
            for (std::size_t j = 0; j < v; ++j) {
                dl[j] = static_cast<float>(std::exp(static_cast<double>(lr[j] - mx)) / total) * loss_weight;
            }
            dl[target] -= loss_weight;
        }

        std::vector<float> dx(n * d, 0.0f), daf(n * d);
        linear_backward(af.data(), n, d, w_.w_head.data(), v, dlogits.data(), daf.data(), g.w_head.data(), nullptr);
        layer_norm_backward(x.data(), n, d, w_.lnf_gamma.data(), meanf.data(), rstdf.data(), daf.data(), dx.data(),
                            g.lnf_gamma.data(), g.lnf_beta.data());

        std::vector<float> dtmp(n * f), da(n * d), dqkv(n * 3 * d), dp(n);
        for (std::size_t l = layers; l-- > 0;) {
            const BlockWeights& b = w_.blocks[l];
            BlockWeights& gb = g.blocks[l];
            const BlockCache& bc = caches_[l];

            // MLP branch.
            linear_backward(bc.fc_act.data(), n, f, b.w_proj.data(), d, dx.data(), dtmp.data(), gb.w_proj.data(),
                            gb.b_proj.data());
            for (std::size_t k = 0; k < n * f; ++k) dtmp[k] *= gelu_grad(bc.fc_pre[k]);
            linear_backward(bc.a2.data(), n, d, b.w_fc.data(), f, dtmp.data(), da.data(), gb.w_fc.data(),
                            gb.b_fc.data());
            layer_norm_backward(bc.x_mid.data(), n, d, b.ln2_gamma.data(), bc.mean2.data(), bc.rstd2.data(),
                                da.data(), dx.data(), gb.ln2_gamma.data(), gb.ln2_beta.data());

            // Attention branch.
            std::vector<float> datt(n * d);
            linear_backward(bc.att.data(), n, d, b.w_out.data(), d, dx.data(), datt.data(), gb.w_out.data(),
                            gb.b_out.data());
            std::fill(dqkv.begin(), dqkv.end(), 0.0f);
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t i = 0; i < n; ++i) {
                    const float* p = bc.probs.data() + (h * n + i) * n;
                    const float* dout = datt.data() + i * d + h * hd;
                    float dot = 0.0f;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const float* val = bc.qkv.data() + j * 3 * d + 2 * d + h * hd;
                        float* dval = dqkv.data() + j * 3 * d + 2 * d + h * hd;
                        float s = 0.0f;
                        for (std::size_t e = 0; e < hd; ++e) {
                            s += dout[e] * val[e];
                            dval[e] += p[j] * dout[e];
                        }
                        dp[j] = s;
                        dot += p[j] * s;
                    }
                    const float* q = bc.qkv.data() + i * 3 * d + h * hd;
                    float* dq = dqkv.data() + i * 3 * d + h * hd;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const float ds = p[j] * (dp[j] - dot) * scale;
                        const float* k = bc.qkv.data() + j * 3 * d + d + h * hd;
                        float* dk = dqkv.data() + j * 3 * d + d + h * hd;
                        for (std::size_t e = 0; e < hd; ++e) {
                            dq[e] += ds * k[e];
                            dk[e] += ds * q[e];
                        }
                    }
                }
            }
            linear_backward(bc.a1.data(), n, d, b.w_qkv.data(), 3 * d, dqkv.data(), da.data(), gb.w_qkv.data(),
                            gb.b_qkv.data());
            layer_norm_backward(bc.x_in.data(), n, d, b.ln1_gamma.data(), bc.mean1.data(), bc.rstd1.data(),
                                da.data(), dx.data(), gb.ln1_gamma.data(), gb.ln1_beta.data());
        }

        for (std::size_t i = 0; i < n; ++i) {
            float* gt = g.tok_emb.data() + static_cast<std::size_t>(tokens[i]) * d;
            float* gp = g.pos_emb.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                gt[j] += dx[i * d + j];
                gp[j] += dx[i * d + j];
            }
        }
        return loss;
    }

private:
    const ModelConfig& c_;
    ModelWeights& w_;
    std::vector<BlockCache> caches_;
};

void check_corpus(const ModelConfig& c, const std::vector<TokenSequence>& corpus) {
    if (corpus.empty()) throw ArgumentError("training corpus is empty");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& s = corpus[i];
        if (s.size() < 2) throw ArgumentError("sequence " + std::to_string(i) + " has fewer than 2 tokens");
        if (s.size() > static_cast<std::size_t>(c.max_seq_len)) {
            throw ArgumentError("sequence " + std::to_string(i) + " exceeds max_seq_len");
        }
        for (TokenId t : s) {
            if (t < 0 || t >= c.vocab_size) throw ArgumentError("sequence " + std::to_string(i) + " has bad token id");
        }
    }
}

}  // namespace

ToyModel train_toy(const ModelConfig& config, const Vocab& vocab, const std::vector<TokenSequence>& corpus,
                   const TrainOptions& options, TrainStats* stats) {
    ModelConfig c = config;
    c.seed = options.seed;
    c.validate();
    if (vocab.size() != static_cast<std::size_t>(c.vocab_size)) {
        throw ArgumentError("vocabulary size does not match config.vocab_size");
    }
    if (options.steps < 1) throw ArgumentError("steps must be >= 1");
    if (options.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!(options.learn_rate > 0.0f) || !std::isfinite(options.learn_rate)) {
        throw ArgumentError("learn_rate must be positive and finite");
    }
    check_corpus(c, corpus);

    ModelWeights w = init_weights(c);
    ModelWeights grads = ModelWeights::zeros(c);
    ModelWeights m1 = ModelWeights::zeros(c);
    ModelWeights m2 = ModelWeights::zeros(c);
    auto params = named_params(w, c);
    auto gparams = named_params(grads, c);
    auto m1p = named_params(m1, c);
    auto m2p = named_params(m2, c);

    constexpr float beta1 = 0.9f, beta2 = 0.99f, eps = 1e-8f;
    Trainer trainer(c, w);

    for (int step = 1; step <= options.steps; ++step) {
        for (auto& gp : gparams) std::fill(gp.values->begin(), gp.values->end(), 0.0f);

        KeyedRng rng(derive_seed(options.seed, "train-batch", {static_cast<std::uint64_t>(step)}));
        std::vector<std::size_t> batch(static_cast<std::size_t>(options.batch_size));
        std::size_t predicted = 0;
        for (auto& idx : batch) {
            idx = rng.below(corpus.size());
            predicted += corpus[idx].size() - 1;
        }
        const float weight = 1.0f / static_cast<float>(predicted);
        double loss = 0.0;
        for (std::size_t idx : batch) loss += trainer.accumulate(corpus[idx], weight, grads);
        loss /= static_cast<double>(predicted);
        if (!std::isfinite(loss)) throw DivergenceError(step, "non-finite loss");
        if (stats) stats->batch_losses.push_back(loss);
        if (options.on_progress && (step % options.log_every == 0 || step == 1)) options.on_progress(step, loss);

        double norm2 = 0.0;
        for (const auto& gp : gparams) {
            for (float x : *gp.values) norm2 += static_cast<double>(x) * x;
        }
        if (!std::isfinite(norm2)) throw DivergenceError(step, "non-finite gradient");
        const double norm = std::sqrt(norm2);
        const float clip = (options.grad_clip > 0.0f && norm > options.grad_clip)
                               ? static_cast<float>(options.grad_clip / norm)
                               : 1.0f;

        double lr = options.learn_rate;
        if (step <= options.warmup_steps) {
            lr *= static_cast<double>(step) / options.warmup_steps;
        } else {
            const double progress = static_cast<double>(step - options.warmup_steps) /
                                    std::max(1, options.steps - options.warmup_steps);
            lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * progress));
        }
        const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
        const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
        const float step_size = static_cast<float>(lr) / bc1;

        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& val = *params[p].values;
            const auto& gv = *gparams[p].values;
            auto& mv = *m1p[p].values;
            auto& vv = *m2p[p].values;
            for (std::size_t k = 0; k < val.size(); ++k) {
                const float gk = gv[k] * clip;
                mv[k] = beta1 * mv[k] + (1.0f - beta1) * gk;
                vv[k] = beta2 * vv[k] + (1.0f - beta2) * gk * gk;
                val[k] -= step_size * mv[k] / (std::sqrt(vv[k] / bc2) + eps);
            }
        }
    }
    for (const auto& p : params) {
        for (float x : *p.values) {
            if (!std::isfinite(x)) throw DivergenceError(options.steps, "non-finite parameter");
        }
    }
    return ToyModel(c, vocab, std::move(w));
}

double loss_and_gradient(const ToyModel& model, std::span<const TokenId> tokens, ModelWeights& grads) {
    const ModelConfig& c = model.config();
    check_corpus(c, {TokenSequence(tokens.begin(), tokens.end())});
    grads = ModelWeights::zeros(c);
    ModelWeights w = model.weights();
    Trainer trainer(c, w);
    const float weight = 1.0f / static_cast<float>(tokens.size() - 1);
    return trainer.accumulate(tokens, weight, grads) / static_cast<double>(tokens.size() - 1);
}

double mean_loss(const ToyModel& model, const std::vector<TokenSequence>& corpus) {
    check_corpus(model.config(), corpus);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& seq : corpus) {
        const ForwardResult r = forward_with_interventions(model, seq);
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            auto row = r.logits.row_span(i);
            const float mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (float x : row) z += std::exp(static_cast<double>(x - mx));
            total += std::log(z) - static_cast<double>(row[static_cast<std::size_t>(seq[i + 1])] - mx);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace langsteer
