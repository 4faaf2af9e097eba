#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "langsteer/corpus.hpp"
#include "langsteer/forward.hpp"
#include "langsteer/model.hpp"
#include "langsteer/tensor.hpp"

namespace langsteer {

enum class Pooling { Mean, Last };
enum class PositionMode { OnFewshot, AfterFewshot, OnQuestion, Entire };

std::string to_string(Pooling p);
Pooling parse_pooling(const std::string& text);
std::string to_string(PositionMode m);
PositionMode parse_position_mode(const std::string& text);
inline constexpr PositionMode kAllPositionModes[] = {PositionMode::OnFewshot, PositionMode::AfterFewshot,
                                                     PositionMode::OnQuestion, PositionMode::Entire};

struct VectorMeta {
    std::string model_id;
    std::string source_lang;
    std::string target_lang;
    std::string task;
    Pooling pooling = Pooling::Mean;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;

    bool operator==(const VectorMeta&) const = default;
};

// Mean target-minus-source pooled difference at one layer.
struct SteeringVector {
    int layer = 1;
    std::vector<float> values;
    VectorMeta meta;

    std::size_t dim() const { return values.size(); }
    bool operator==(const SteeringVector&) const = default;
};

struct SteeringPlan {
    int layer = 1;
    double alpha = 1.0;
    PositionMode mode = PositionMode::Entire;
    SteeringVector vector;
};

struct PooledStateSet {
    int layer = 1;
    Matrix states;  // N x d
    std::string lang;
    Pooling pooling = Pooling::Mean;
    std::string model_id;
    std::vector<std::uint64_t> text_hashes;
};

// Pools one captured trace.
std::vector<float> pool_trace(const Matrix& states, Pooling pooling);

// Row i pools the layer-`layer` trace of texts[i].
PooledStateSet pooled_hidden_states(const ToyModel& model, const std::vector<std::string>& texts, int layer,
                                    Pooling pooling, std::string lang = {}, int workers = 1);

// Same as one call per layer, with a single forward pass per text.
std::map<int, PooledStateSet> pooled_hidden_states_multi(const ToyModel& model, const std::vector<std::string>& texts,
                                                         const std::set<int>& layers, Pooling pooling,
                                                         std::string lang = {}, int workers = 1);

// v = (1/N) sum_i (target_i - source_i), summed in sample order.
SteeringVector compute_language_vector(const PooledStateSet& source, const PooledStateSet& target);

// Token positions a mode steers.
std::vector<std::size_t> resolve_positions(const RenderedPrompt& prompt, PositionMode mode);

SteeringPlan make_plan(const SteeringVector& vector, double alpha, PositionMode mode);
std::vector<InterventionSpec> plan_interventions(const RenderedPrompt& prompt, const SteeringPlan& plan);

// Greedy continuation of a rendered prompt, steered when a plan is given.
std::vector<TokenId> generate(const ToyModel& model, const RenderedPrompt& prompt,
                              const std::optional<SteeringPlan>& plan, int max_new_tokens,
                              std::optional<TokenId> stop_token = std::nullopt);

// Vector file: JSON {"format_version": 1, model_id, layer, dim, source_lang,
// target_lang, task, pooling, n_samples, seed, values}.
inline constexpr int kVectorFormatVersion = 1;
void save_vector(const SteeringVector& v, const std::filesystem::path& path);
SteeringVector load_vector(const std::filesystem::path& path);
std::string vector_to_json(const SteeringVector& v);
SteeringVector vector_from_json(const std::string& text);

// Activation dump: "LVAD1\n", u64 LE header length, JSON header {layer, dim,
// n, lang, pooling, model_id}, then n x dim float32 LE row-major.
void export_activation_dump(const PooledStateSet& states, const std::filesystem::path& path);
PooledStateSet import_activation_dump(const std::filesystem::path& path);

}  // namespace langsteer
