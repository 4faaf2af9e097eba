#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "langsteer/model.hpp"
#include "langsteer/tokenizer.hpp"

namespace testutil {

inline langsteer::Vocab word_vocab(int n) {
    std::vector<std::string> s = {"\n"};
    for (int i = 0; i < n; ++i) s.push_back("w" + std::to_string(i));
    return langsteer::Vocab(s);
}

inline langsteer::ToyModel model_with_vocab(langsteer::Vocab vocab, int layers = 2, int d = 16, int heads = 2,
                                            int max_seq = 32, std::uint64_t seed = 7) {
    langsteer::ModelConfig c;
    c.num_layers = layers;
    c.hidden_size = d;
    c.num_heads = heads;
    c.vocab_size = static_cast<int>(vocab.size());
    c.max_seq_len = max_seq;
    c.seed = seed;
    langsteer::ModelWeights w = langsteer::init_weights(c);
    // Larger weights than the init so that activations are far from trivial.
    std::mt19937_64 gen(seed + 1);
    std::normal_distribution<float> nd(0.0f, 0.3f);
    for (auto& p : langsteer::named_params(w, c)) {
        for (float& x : *p.values) x += nd(gen);
    }
    return langsteer::ToyModel(c, std::move(vocab), std::move(w));
}

inline langsteer::ToyModel random_model(int layers = 2, int d = 16, int heads = 2, int vocab_words = 11,
                                        int max_seq = 32, std::uint64_t seed = 7) {
    return model_with_vocab(word_vocab(vocab_words), layers, d, heads, max_seq, seed);
}

inline std::vector<langsteer::TokenId> random_tokens(std::mt19937_64& gen, std::size_t n, int vocab) {
    std::uniform_int_distribution<int> u(0, vocab - 1);
    std::vector<langsteer::TokenId> t(n);
    for (auto& x : t) x = u(gen);
    return t;
}

inline std::vector<float> random_vector(std::mt19937_64& gen, std::size_t d, float scale = 1.0f) {
    std::normal_distribution<float> nd(0.0f, scale);
    std::vector<float> v(d);
    for (auto& x : v) x = nd(gen);
    return v;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("langsteer-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
