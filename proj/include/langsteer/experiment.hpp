#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langsteer/evaluation.hpp"

namespace langsteer {

struct ExperimentConfig {
    std::vector<int> layers = {5, 10, 15, 20, 25, 30};
    std::vector<double> alphas = {0.5, 1.0, 2.0, 3.0};
    std::vector<PositionMode> modes = {kAllPositionModes[0], kAllPositionModes[1], kAllPositionModes[2],
                                       kAllPositionModes[3]};
    int k = 6;
    std::uint64_t seed = 0;
    std::string source_lang = "en";
    std::string target_lang;
    std::string task;
    Pooling pooling = Pooling::Mean;

    void validate() const;
    PromptRecipe recipe(RecipeKind kind) const;
};

struct GridPoint {
    int layer = 0;
    double alpha = 0.0;
    PositionMode mode = PositionMode::Entire;

    bool operator==(const GridPoint&) const = default;
};

// Selection order among equal validation scores: lower alpha, then lower
// layer, then on_fewshot < after_fewshot < on_question < entire.
bool tie_break_less(const GridPoint& a, const GridPoint& b);

struct GridRow {
    GridPoint point;
    Fraction val;
    double val_target_rate = 0.0;
};

// Evaluates an optional plan on one split part. Implementations must be
// safe to call concurrently.
class PlanScorer {
public:
    virtual ~PlanScorer() = default;
    virtual EvalReport score(const std::optional<SteeringPlan>& plan, SplitPart part) const = 0;
};

// Scores plans with an Evaluator under one prompt recipe.
class RecipeScorer : public PlanScorer {
public:
    RecipeScorer(const Evaluator& evaluator, PromptRecipe recipe, std::string steered_label = "Ours")
        : ev_(evaluator), recipe_(std::move(recipe)), label_(std::move(steered_label)) {}
    EvalReport score(const std::optional<SteeringPlan>& plan, SplitPart part) const override;

private:
    const Evaluator& ev_;
    PromptRecipe recipe_;
    std::string label_;
};

struct GridSearchResult {
    EvalReport baseline_val;
    EvalReport baseline_test;
    std::vector<GridRow> val_table;  // layer-major, then alpha, then mode
    std::optional<GridPoint> selected;
    std::optional<SteeringPlan> selected_plan;
    // The winner's test report, or the baseline test report when nothing
    // passed the gate (flagged "no gated config").
    EvalReport test_report;

    bool gated() const { return selected.has_value(); }
};

// Among rows strictly above the baseline, the best validation score with the
// documented tie-break. nullopt when no row passes the gate.
std::optional<GridPoint> select_gated(const std::vector<GridRow>& rows, const Fraction& baseline_val);

// Full gated search over config.layers x config.alphas x config.modes.
GridSearchResult grid_search(const PlanScorer& scorer, const std::map<int, SteeringVector>& vectors,
                             const ExperimentConfig& config, int workers = 1, const std::string& label = "Ours");

struct PooledPair {
    std::map<int, PooledStateSet> source;
    std::map<int, PooledStateSet> target;
};

// Pooled source and target states of the compute samples at every grid layer.
PooledPair extract_pooled_states(const Evaluator& evaluator, const ExperimentConfig& config,
                                 const std::vector<std::string>& compute_ids, Pooling pooling, int workers = 1);

// Vectors for every grid layer from the given compute ids.
std::map<int, SteeringVector> extract_vectors(const Evaluator& evaluator, const ExperimentConfig& config,
                                              const std::vector<std::string>& compute_ids, Pooling pooling,
                                              int workers = 1);

// Seeded standard-normal vectors, one per grid layer.
std::map<int, SteeringVector> random_vectors(const ExperimentConfig& config, std::size_t dim);

struct OursResult {
    std::map<int, SteeringVector> vectors;
    GridSearchResult grid;
};

// Everything needed to re-run the steering pipeline with variations.
struct Pipeline {
    const Evaluator& evaluator;
    ExperimentConfig config;
    int workers = 1;
};

OursResult run_ours(const Pipeline& pipeline);
OursResult run_ours(const Pipeline& pipeline, const std::vector<std::string>& compute_ids, Pooling pooling);

enum class BaselineKind { B, MFS, Oracle, Random };
std::string to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& text);

// B / MFS / Oracle evaluate the test part without steering; Random runs the
// full gated search with random vectors and returns its test report.
EvalReport run_baseline(BaselineKind kind, const Pipeline& pipeline);

// Applies a vector and hyperparameters selected on another task, unchanged,
// to this evaluator's test part. Labelled "CT".
EvalReport cross_task_eval(const SteeringVector& vector, const GridPoint& hyperparameters, const Evaluator& target_task,
                           const ExperimentConfig& config, int workers = 1);

// "within_band", "above_band" or "transfer_failure" relative to [min(B, Ours), max(B, Ours)].
std::string classify_transfer(const Fraction& ct, const Fraction& baseline, const Fraction& ours);

}  // namespace langsteer
