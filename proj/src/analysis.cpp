#include "langsteer/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <json.hpp>

#include "format.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/parallel.hpp"
#include "langsteer/rng.hpp"

namespace langsteer {

DistanceMatrix cosine_distance_matrix(const std::map<std::string, SteeringVector>& vectors) {
    if (vectors.empty()) throw ArgumentError("no vectors to compare");
    const SteeringVector& first = vectors.begin()->second;
    DistanceMatrix m;
    std::vector<const std::vector<float>*> vals;
    std::vector<double> sq;
    for (const auto& [lang, v] : vectors) {
        if (v.layer != first.layer) throw ArgumentError("vector for '" + lang + "' is from a different layer");
        if (v.dim() != first.dim()) throw ArgumentError("vector for '" + lang + "' has a different dimension");
        double s = 0.0;
        for (float x : v.values) s += static_cast<double>(x) * x;
        if (s == 0.0) throw ArgumentError("vector for '" + lang + "' has zero norm");
        m.labels.push_back(lang);
        vals.push_back(&v.values);
        sq.push_back(s);
    }
    const std::size_t n = m.labels.size();
    m.entries.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < vals[i]->size(); ++c) {
                dot += static_cast<double>((*vals[i])[c]) * (*vals[j])[c];
            }
            const double cos = std::clamp(dot / std::sqrt(sq[i] * sq[j]), -1.0, 1.0);
            m.entries[i][j] = m.entries[j][i] = 1.0 - cos;
        }
    }
    return m;
}

std::string to_string(Linkage) { return "average"; }

Linkage parse_linkage(const std::string& text) {
    if (text == "average") return Linkage::Average;
    throw ArgumentError("unsupported linkage '" + text + "' (only average is implemented)");
}

std::vector<std::string> Dendrogram::members(int id) const {
    const int n = static_cast<int>(leaves.size());
    if (id < 0 || id >= n + static_cast<int>(merges.size())) throw ArgumentError("no cluster " + std::to_string(id));
    if (id < n) return {leaves[static_cast<std::size_t>(id)]};
    return merges[static_cast<std::size_t>(id - n)].members;
}

namespace {

double cluster_height(const Dendrogram& d, int id) {
    const int n = static_cast<int>(d.leaves.size());
    return id < n ? 0.0 : d.merges[static_cast<std::size_t>(id - n)].distance;
}

std::string newick_length(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

}  // namespace

std::string Dendrogram::to_newick() const {
    if (merges.empty()) return leaves.size() == 1 ? leaves[0] + ";" : ";";
    const int n = static_cast<int>(leaves.size());
    std::function<std::string(int)> rec = [&](int id) -> std::string {
        if (id < n) return leaves[static_cast<std::size_t>(id)];
        const MergeStep& m = merges[static_cast<std::size_t>(id - n)];
        return "(" + rec(m.left) + ":" + newick_length(m.distance - cluster_height(*this, m.left)) + "," +
               rec(m.right) + ":" + newick_length(m.distance - cluster_height(*this, m.right)) + ")";
    };
    return rec(n + static_cast<int>(merges.size()) - 1) + ";";
}

std::string Dendrogram::to_json() const {
    const int n = static_cast<int>(leaves.size());
    std::function<nlohmann::ordered_json(int)> rec = [&](int id) {
        nlohmann::ordered_json node;
        if (id < n) {
            node["name"] = leaves[static_cast<std::size_t>(id)];
            return node;
        }
        const MergeStep& m = merges[static_cast<std::size_t>(id - n)];
        node["id"] = id;
        node["distance"] = m.distance;
        node["members"] = m.members;
        node["children"] = nlohmann::ordered_json::array({rec(m.left), rec(m.right)});
        return node;
    };
    nlohmann::ordered_json doc;
    doc["linkage"] = "average";
    doc["leaves"] = leaves;
    doc["tree"] = leaves.empty() ? nlohmann::ordered_json() : rec(n + static_cast<int>(merges.size()) - 1);
    return doc.dump(2) + "\n";
}

Dendrogram agglomerative_cluster(const DistanceMatrix& matrix, Linkage) {
    const std::size_t n = matrix.size();
    if (n < 2) throw ArgumentError("clustering needs at least two leaves");
    if (matrix.entries.size() != n) throw ArgumentError("distance matrix row count differs from label count");
    for (const auto& row : matrix.entries) {
        if (row.size() != n) throw ArgumentError("distance matrix is not square");
    }
    if (std::set<std::string>(matrix.labels.begin(), matrix.labels.end()).size() != n) {
        throw ArgumentError("distance matrix labels repeat");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (matrix.entries[i][i] != 0.0) throw ArgumentError("distance matrix diagonal must be zero");
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(matrix.entries[i][j])) throw ArgumentError("distance matrix holds a non-finite entry");
            if (matrix.entries[i][j] != matrix.entries[j][i]) {
                throw ArgumentError("distance matrix is not symmetric at (" + matrix.labels[i] + ", " +
                                    matrix.labels[j] + ")");
            }
        }
    }

    Dendrogram out;
    out.leaves = matrix.labels;

    const std::size_t total = 2 * n - 1;
    std::vector<std::vector<double>> dist(total, std::vector<double>(total, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[i][j] = matrix.entries[i][j];
    }
    std::vector<std::size_t> size(total, 1);
    std::vector<std::string> min_label(total);
    for (std::size_t i = 0; i < n; ++i) min_label[i] = matrix.labels[i];
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t best_a = 0, best_b = 0;
        bool found = false;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                std::size_t a = active[x], b = active[y];
                if (min_label[b] < min_label[a]) std::swap(a, b);
                if (!found) {
                    best_a = a;
                    best_b = b;
                    found = true;
                    continue;
                }
                const double d = dist[a][b];
                const double bd = dist[best_a][best_b];
                if (d < bd || (d == bd && std::tie(min_label[a], min_label[b]) <
                                              std::tie(min_label[best_a], min_label[best_b]))) {
                    best_a = a;
                    best_b = b;
                }
            }
        }

        const std::size_t c = n + step;
        MergeStep m;
        m.left = static_cast<int>(best_a);
        m.right = static_cast<int>(best_b);
        m.distance = dist[best_a][best_b];
        m.members = out.members(m.left);
        const auto rhs = out.members(m.right);
        m.members.insert(m.members.end(), rhs.begin(), rhs.end());
        std::sort(m.members.begin(), m.members.end());
        out.merges.push_back(m);

        size[c] = size[best_a] + size[best_b];
        min_label[c] = m.members.front();
        const double na = static_cast<double>(size[best_a]);
        const double nb = static_cast<double>(size[best_b]);
        std::erase_if(active, [&](std::size_t id) { return id == best_a || id == best_b; });
        for (std::size_t k : active) {
            const double d = (na * dist[k][best_a] + nb * dist[k][best_b]) / (na + nb);
            dist[k][c] = dist[c][k] = d;
        }
        active.push_back(c);
    }
    return out;
}

std::vector<NormRow> norm_table(const std::map<std::string, SteeringVector>& vectors) {
    std::vector<NormRow> rows;
    for (const auto& [lang, v] : vectors) {
        double s = 0.0;
        for (float x : v.values) s += static_cast<double>(x) * x;
        rows.push_back({lang, std::sqrt(s)});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const NormRow& a, const NormRow& b) {
        if (a.norm != b.norm) return a.norm > b.norm;
        return a.label < b.label;
    });
    return rows;
}

std::vector<std::string> compute_subset(const std::vector<std::string>& compute_ids, double fraction,
                                        std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ArgumentError("fraction " + fmt::shortest(fraction) + " must lie in (0, 1]");
    }
    const std::size_t n = compute_ids.size();
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    if (count == 0) {
        throw ArgumentError("fraction " + fmt::shortest(fraction) + " of " + std::to_string(n) +
                            " compute examples selects none");
    }
    const auto perm = seeded_permutation(n, derive_seed(seed, "sensitivity"));
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::string> out;
    for (std::size_t i : chosen) out.push_back(compute_ids[i]);
    return out;
}

SensitivityCurve sensitivity_sweep(const std::vector<double>& fractions, const Pipeline& pipeline,
                                   std::uint64_t seed) {
    if (fractions.empty()) throw ArgumentError("no fractions given");
    for (std::size_t i = 1; i < fractions.size(); ++i) {
        if (!(fractions[i - 1] < fractions[i])) throw ArgumentError("fractions must be strictly ascending");
    }
    const auto& compute = pipeline.evaluator.split().compute_ids;
    std::vector<std::vector<std::string>> subsets;
    for (double f : fractions) subsets.push_back(compute_subset(compute, f, seed));

    SensitivityCurve curve;
    const EvalReport base = run_baseline(BaselineKind::B, pipeline);
    curve.base = base.accuracy;
    curve.base_target_rate = base.target_rate;
    curve.points.resize(fractions.size());
    const Pipeline inner{pipeline.evaluator, pipeline.config, 1};
    parallel_for(fractions.size(), pipeline.workers, [&](std::size_t i) {
        const OursResult r = run_ours(inner, subsets[i], pipeline.config.pooling);
        SensitivityPoint& p = curve.points[i];
        p.fraction = fractions[i];
        p.compute_size = subsets[i].size();
        p.selected = r.grid.selected;
        p.test = r.grid.test_report.accuracy;
        p.test_target_rate = r.grid.test_report.target_rate;
    });
    return curve;
}

PoolingAblationRow pooling_ablation(const Pipeline& pipeline) {
    const auto& compute = pipeline.evaluator.split().compute_ids;
    const OursResult mean = run_ours(pipeline, compute, Pooling::Mean);
    const OursResult last = run_ours(pipeline, compute, Pooling::Last);
    PoolingAblationRow row;
    row.language = pipeline.config.target_lang;
    row.task = pipeline.config.task;
    row.baseline = mean.grid.baseline_test.accuracy;
    row.mean = mean.grid.test_report.accuracy;
    row.last = last.grid.test_report.accuracy;
    row.mean_selected = mean.grid.selected;
    row.last_selected = last.grid.selected;
    return row;
}

namespace {

std::string point_cells(const std::optional<GridPoint>& p) {
    if (!p) return ",,";
    return std::to_string(p->layer) + "," + fmt::shortest(p->alpha) + "," + to_string(p->mode);
}

}  // namespace

std::string distance_matrix_csv(const DistanceMatrix& matrix) {
    std::string out = "label";
    for (const auto& l : matrix.labels) out += "," + l;
    out += "\n";
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        out += matrix.labels[i];
        for (std::size_t j = 0; j < matrix.size(); ++j) out += "," + fmt::shortest(matrix.at(i, j));
        out += "\n";
    }
    return out;
}

std::string merges_csv(const Dendrogram& dendrogram) {
    std::string out = "step,left,right,distance,members\n";
    for (std::size_t i = 0; i < dendrogram.merges.size(); ++i) {
        const MergeStep& m = dendrogram.merges[i];
        std::string members;
        for (const auto& s : m.members) members += (members.empty() ? "" : ";") + s;
        out += std::to_string(i + 1) + "," + std::to_string(m.left) + "," + std::to_string(m.right) + "," +
               fmt::shortest(m.distance) + "," + members + "\n";
    }
    return out;
}

std::string norm_table_csv(const std::vector<NormRow>& rows) {
    std::string out = "language,norm\n";
    for (const auto& r : rows) out += r.label + "," + fmt::shortest(r.norm) + "\n";
    return out;
}

std::string sensitivity_csv(const SensitivityCurve& curve) {
    std::string out = "kind,fraction,compute_size,layer,alpha,position,test_acc,target_rate\n";
    out += "base,,,,,," + fmt::percent(curve.base) + "," + fmt::round2(100.0 * curve.base_target_rate) + "\n";
    for (const auto& p : curve.points) {
        out += "steered," + fmt::shortest(p.fraction) + "," + std::to_string(p.compute_size) + "," +
               point_cells(p.selected) + "," + fmt::percent(p.test) + "," + fmt::round2(100.0 * p.test_target_rate) +
               "\n";
    }
    return out;
}

std::string pooling_ablation_csv(const std::vector<PoolingAblationRow>& rows) {
    std::string out = "language,task,baseline,mean_pool,mean_delta,last_token,last_delta\n";
    for (const auto& r : rows) {
        out += r.language + "," + r.task + "," + fmt::percent(r.baseline) + "," + fmt::percent(r.mean) + "," +
               fmt::round2(r.mean_delta()) + "," + fmt::percent(r.last) + "," + fmt::round2(r.last_delta()) + "\n";
    }
    return out;
}

}  // namespace langsteer
