#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "langsteer/model.hpp"

namespace langsteer {

using TokenSequence = std::vector<TokenId>;

struct TrainOptions {
    int steps = 1000;
    float learn_rate = 3e-3f;
    std::uint64_t seed = 0;
    int batch_size = 8;
    int warmup_steps = 50;
    float grad_clip = 1.0f;
    // Called every `log_every` steps with (step, batch loss).
    std::function<void(int, double)> on_progress;
    int log_every = 100;
};

struct TrainStats {
    std::vector<double> batch_losses;
};

// Next-token training with Adam. Single-threaded and fully determined by
// (config, vocab, corpus, options). config.seed is replaced by options.seed.
ToyModel train_toy(const ModelConfig& config, const Vocab& vocab, const std::vector<TokenSequence>& corpus,
                   const TrainOptions& options, TrainStats* stats = nullptr);

inline ToyModel train_toy(const ModelConfig& config, const Vocab& vocab, const std::vector<TokenSequence>& corpus,
                          int steps, float learn_rate, std::uint64_t seed) {
    TrainOptions o;
    o.steps = steps;
    o.learn_rate = learn_rate;
    o.seed = seed;
    return train_toy(config, vocab, corpus, o);
}

// Mean next-token cross-entropy of one sequence and its gradient with
// respect to every parameter (written into `grads`, which is overwritten).
double loss_and_gradient(const ToyModel& model, std::span<const TokenId> tokens, ModelWeights& grads);

// Mean next-token cross-entropy over all predicted positions of `corpus`,
// computed with the inference forward pass.
double mean_loss(const ToyModel& model, const std::vector<TokenSequence>& corpus);

}  // namespace langsteer
