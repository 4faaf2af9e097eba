#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "langsteer/model.hpp"
#include "langsteer/tensor.hpp"

namespace langsteer {

// Residual-stream states of one layer for every token of a sequence.
// Row j is the output of block `layer` (1-based) at position j, i.e. the
// value after the block's final residual addition.
struct ActivationTrace {
    int layer = 0;
    Matrix states;
};

// Adds scale * delta to the residual stream leaving block `layer` at every
// listed position. Interventions sharing a bitwise-identical delta at the same
// layer have their scales summed first, so stacking (a, v) and (b, v) equals
// (a + b, v) exactly.
struct InterventionSpec {
    int layer = 1;
    std::vector<std::size_t> positions;
    std::vector<float> delta;
    double scale = 1.0;
};

struct ForwardResult {
    Matrix logits;  // seq x vocab
    std::map<int, ActivationTrace> traces;
};

ForwardResult forward_with_interventions(const ToyModel& model, std::span<const TokenId> tokens,
                                         std::span<const InterventionSpec> interventions = {},
                                         const std::set<int>& capture_layers = {});

// Greedy decoding. Interventions may only address prompt positions; their
// effect reaches generated tokens through the cached keys and values.
// Stops after emitting `stop_token` when one is given.
std::vector<TokenId> generate(const ToyModel& model, std::span<const TokenId> prompt,
                              std::span<const InterventionSpec> interventions, int max_new_tokens,
                              std::optional<TokenId> stop_token = std::nullopt);

}  // namespace langsteer
