#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "langsteer/tokenizer.hpp"

namespace langsteer {

struct ModelConfig {
    int num_layers = 4;
    int hidden_size = 64;
    int num_heads = 4;
    int vocab_size = 0;
    int max_seq_len = 64;
    std::uint64_t seed = 0;

    int head_dim() const { return hidden_size / num_heads; }
    int mlp_size() const { return 4 * hidden_size; }
    // Throws ArgumentError when an invariant is violated.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct BlockWeights {
    std::vector<float> ln1_gamma, ln1_beta;
    std::vector<float> w_qkv, b_qkv;    // d x 3d, 3d
    std::vector<float> w_out, b_out;    // d x d, d
    std::vector<float> ln2_gamma, ln2_beta;
    std::vector<float> w_fc, b_fc;      // d x 4d, 4d
    std::vector<float> w_proj, b_proj;  // 4d x d, d
};

// Pre-norm decoder: learned token and position embeddings, T blocks of
// attention + GELU MLP, final layer norm and an untied output head.
struct ModelWeights {
    std::vector<float> tok_emb;  // V x d
    std::vector<float> pos_emb;  // S x d
    std::vector<BlockWeights> blocks;
    std::vector<float> lnf_gamma, lnf_beta;
    std::vector<float> w_head;  // d x V

    // Zero-filled weights with the shapes implied by `config`.
    static ModelWeights zeros(const ModelConfig& config);
};

struct ParamRef {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float>* values;
};

struct ConstParamRef {
    std::string name;
    std::vector<std::size_t> shape;
    const std::vector<float>* values;
};

// Every tensor with its canonical name, in sorted name order.
std::vector<ParamRef> named_params(ModelWeights& weights, const ModelConfig& config);
std::vector<ConstParamRef> named_params(const ModelWeights& weights, const ModelConfig& config);

// Immutable weights + config + vocabulary. Safe to share across threads.
class ToyModel {
public:
    ToyModel(ModelConfig config, Vocab vocab, ModelWeights weights);

    const ModelConfig& config() const { return config_; }
    const Vocab& vocab() const { return vocab_; }
    const ModelWeights& weights() const { return weights_; }
    // FNV-1a over config, vocabulary and parameter bytes.
    std::uint64_t hash() const { return hash_; }
    std::string id() const;

private:
    ModelConfig config_;
    Vocab vocab_;
    ModelWeights weights_;
    std::uint64_t hash_ = 0;
};

// Random initialisation (N(0, 0.02) weights, unit layer-norm gains).
ModelWeights init_weights(const ModelConfig& config);

// Model file: "LVTM1\n", u64 LE JSON length, JSON config (including the
// vocabulary), then per tensor in sorted name order: u32 name length, name,
// u32 rank, u64 dims, float32 LE data.
void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace langsteer
