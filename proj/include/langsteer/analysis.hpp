#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langsteer/experiment.hpp"
#include "langsteer/steering.hpp"

namespace langsteer {

struct DistanceMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> entries;

    std::size_t size() const { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return entries[i][j]; }
};

// entry(a, b) = 1 - cos(v_a, v_b), labels in map order.
DistanceMatrix cosine_distance_matrix(const std::map<std::string, SteeringVector>& vectors);

enum class Linkage { Average };
std::string to_string(Linkage linkage);
Linkage parse_linkage(const std::string& text);

// Clusters are numbered as in SciPy: leaves 0..L-1, merge i creates L+i.
struct MergeStep {
    int left = 0;
    int right = 0;
    double distance = 0.0;
    std::vector<std::string> members;  // sorted labels of the merged cluster
};

struct Dendrogram {
    std::vector<std::string> leaves;
    std::vector<MergeStep> merges;

    // Sorted member labels of cluster `id`.
    std::vector<std::string> members(int id) const;
    std::string to_newick() const;
    std::string to_json() const;
};

// Repeatedly merges the closest pair of clusters. Exact ties go to the pair
// whose smallest member labels are lexicographically first.
Dendrogram agglomerative_cluster(const DistanceMatrix& matrix, Linkage linkage = Linkage::Average);

struct NormRow {
    std::string label;
    double norm = 0.0;
};

// Euclidean norms, largest first, equal norms by label.
std::vector<NormRow> norm_table(const std::map<std::string, SteeringVector>& vectors);

struct SensitivityPoint {
    double fraction = 0.0;
    std::size_t compute_size = 0;
    std::optional<GridPoint> selected;
    Fraction test;
    double test_target_rate = 0.0;
};

struct SensitivityCurve {
    Fraction base;  // unsteered baseline on the test part
    double base_target_rate = 0.0;
    std::vector<SensitivityPoint> points;
};

inline const std::vector<double> kDefaultFractions = {0.1, 0.25, 0.5, 0.75, 1.0};

// Compute-set members for one fraction: the first floor(f * N) ids of a
// seeded shuffle, listed in their original compute order.
std::vector<std::string> compute_subset(const std::vector<std::string>& compute_ids, double fraction,
                                        std::uint64_t seed);

SensitivityCurve sensitivity_sweep(const std::vector<double>& fractions, const Pipeline& pipeline,
                                   std::uint64_t seed);

struct PoolingAblationRow {
    std::string language;
    std::string task;
    Fraction baseline;
    Fraction mean;
    Fraction last;
    std::optional<GridPoint> mean_selected;
    std::optional<GridPoint> last_selected;

    // Percentage-point differences against the baseline.
    double mean_delta() const { return 100.0 * (mean.value() - baseline.value()); }
    double last_delta() const { return 100.0 * (last.value() - baseline.value()); }
};

PoolingAblationRow pooling_ablation(const Pipeline& pipeline);

std::string distance_matrix_csv(const DistanceMatrix& matrix);
std::string merges_csv(const Dendrogram& dendrogram);
std::string norm_table_csv(const std::vector<NormRow>& rows);
std::string sensitivity_csv(const SensitivityCurve& curve);
std::string pooling_ablation_csv(const std::vector<PoolingAblationRow>& rows);

}  // namespace langsteer
