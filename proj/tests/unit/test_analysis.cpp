#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "langsteer/analysis.hpp"
#include "langsteer/errors.hpp"

using namespace langsteer;

namespace {

SteeringVector vec(std::vector<float> values, int layer = 3) {
    SteeringVector v;
    v.layer = layer;
    v.values = std::move(values);
    return v;
}

DistanceMatrix matrix_of(std::vector<std::string> labels, std::vector<std::vector<double>> entries) {
    return {std::move(labels), std::move(entries)};
}

struct RefMerge {
    std::vector<std::string> members;
    double distance;
};

// Average linkage from first principles: the distance between two clusters
// is the mean over all cross pairs of original points.
std::vector<RefMerge> brute_average(const DistanceMatrix& m) {
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < m.size(); ++i) clusters.push_back({i});
    std::vector<RefMerge> out;
    while (clusters.size() > 1) {
        double best = 1e300;
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                double sum = 0.0;
                for (std::size_t i : clusters[a])
                    for (std::size_t j : clusters[b]) sum += m.at(i, j);
                const double d = sum / static_cast<double>(clusters[a].size() * clusters[b].size());
                if (d < best) {
                    best = d;
                    ba = a;
                    bb = b;
                }
            }
        }
        std::vector<std::size_t> merged = clusters[ba];
        merged.insert(merged.end(), clusters[bb].begin(), clusters[bb].end());
        RefMerge r;
        for (std::size_t i : merged) r.members.push_back(m.labels[i]);
        std::sort(r.members.begin(), r.members.end());
        r.distance = best;
        out.push_back(r);
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
        clusters[ba] = merged;
    }
    return out;
}

}  // namespace

TEST_CASE("cosine distances of known vectors") {
    std::map<std::string, SteeringVector> v = {
        {"a", vec({1, 0})}, {"b", vec({3, 0})}, {"c", vec({0, 2})}, {"d", vec({-1, 0})}};
    const DistanceMatrix m = cosine_distance_matrix(v);
    CHECK(m.labels == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(m.at(0, 1) == doctest::Approx(0.0));
    CHECK(m.at(0, 2) == doctest::Approx(1.0));
    CHECK(m.at(0, 3) == doctest::Approx(2.0));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m.at(i, i) == 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(m.at(i, j) == m.at(j, i));
            CHECK(m.at(i, j) >= 0.0);
            CHECK(m.at(i, j) <= 2.0);
        }
    }
}

TEST_CASE("cosine distance errors") {
    CHECK_THROWS_AS(cosine_distance_matrix({{"a", vec({1, 0})}, {"z", vec({0, 0})}}), ArgumentError);
    CHECK_THROWS_AS(cosine_distance_matrix({{"a", vec({1, 0})}, {"b", vec({1, 0, 0})}}), ArgumentError);
    CHECK_THROWS_AS(cosine_distance_matrix({{"a", vec({1, 0})}, {"b", vec({1, 0}, 4)}}), ArgumentError);
    try {
        cosine_distance_matrix({{"a", vec({1, 0})}, {"zero", vec({0, 0})}});
    } catch (const ArgumentError& e) {
        CHECK(std::string(e.what()).find("zero") != std::string::npos);
    }
}

TEST_CASE("two leaves") {
    const Dendrogram d = agglomerative_cluster(matrix_of({"p", "q"}, {{0, 0.7}, {0.7, 0}}));
    REQUIRE(d.merges.size() == 1);
    CHECK(d.merges[0].left == 0);
    CHECK(d.merges[0].right == 1);
    CHECK(d.merges[0].distance == 0.7);
    CHECK(d.to_newick() == "(p:0.700000,q:0.700000);");
    CHECK(d.members(2) == std::vector<std::string>{"p", "q"});
}

TEST_CASE("hand example with ids and Lance-Williams update") {
    // a-b close, c next to them, d far.
    const DistanceMatrix m = matrix_of({"a", "b", "c", "d"}, {{0, 1, 4, 9}, {1, 0, 2, 8}, {4, 2, 0, 7}, {9, 8, 7, 0}});
    const Dendrogram d = agglomerative_cluster(m);
    REQUIRE(d.merges.size() == 3);
    CHECK(d.merges[0].distance == 1.0);
    CHECK(d.merges[0].members == std::vector<std::string>{"a", "b"});
    // c joins {a, b} at (4 + 2) / 2.
    CHECK(d.merges[1].left == 4);
    CHECK(d.merges[1].right == 2);
    CHECK(d.merges[1].distance == 3.0);
    // d joins at (9 + 8 + 7) / 3.
    CHECK(d.merges[2].distance == 8.0);
    CHECK(d.merges[2].members.size() == 4);
    CHECK(d.to_newick() == "(((a:1.000000,b:1.000000):2.000000,c:3.000000):5.000000,d:8.000000);");
    CHECK(d.to_json().find("\"linkage\": \"average\"") != std::string::npos);
}

TEST_CASE("exact ties go to the lexicographically first pair") {
    const DistanceMatrix m =
        matrix_of({"w", "x", "y", "z"}, {{0, 1, 5, 5}, {1, 0, 5, 5}, {5, 5, 0, 1}, {5, 5, 1, 0}});
    const Dendrogram d = agglomerative_cluster(m);
    CHECK(d.merges[0].members == std::vector<std::string>{"w", "x"});
    CHECK(d.merges[1].members == std::vector<std::string>{"y", "z"});
    // Same matrix with labels listed in another order.
    const DistanceMatrix r =
        matrix_of({"z", "y", "x", "w"}, {{0, 1, 5, 5}, {1, 0, 5, 5}, {5, 5, 0, 1}, {5, 5, 1, 0}});
    const Dendrogram e = agglomerative_cluster(r);
    CHECK(e.merges[0].members == std::vector<std::string>{"w", "x"});
}

TEST_CASE("average linkage agrees with brute force over random matrices") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 gen(seed);
        const int n = 4 + static_cast<int>(seed % 3);
        std::uniform_real_distribution<double> u(0.05, 2.0);
        DistanceMatrix m;
        for (int i = 0; i < n; ++i) m.labels.push_back(std::string(1, static_cast<char>('a' + i)));
        m.entries.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) m.entries[i][j] = m.entries[j][i] = u(gen);

        const Dendrogram d = agglomerative_cluster(m);
        const auto ref = brute_average(m);
        REQUIRE(d.merges.size() == ref.size());
        for (std::size_t s = 0; s < ref.size(); ++s) {
            CHECK(d.merges[s].members == ref[s].members);
            CHECK(d.merges[s].distance == doctest::Approx(ref[s].distance).epsilon(1e-12));
            if (s) CHECK(d.merges[s].distance >= d.merges[s - 1].distance - 1e-12);
            CHECK(d.members(n + static_cast<int>(s)) == ref[s].members);
        }

        // Relabelling leaves the merge structure unchanged.
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[i] = n - 1 - i;
        DistanceMatrix p;
        for (int i : order) p.labels.push_back(m.labels[i]);
        p.entries.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) p.entries[i][j] = m.entries[order[i]][order[j]];
        const Dendrogram q = agglomerative_cluster(p);
        for (std::size_t s = 0; s < ref.size(); ++s) {
            CHECK(q.merges[s].members == d.merges[s].members);
            CHECK(q.merges[s].distance == doctest::Approx(d.merges[s].distance).epsilon(1e-12));
        }
    }
}

TEST_CASE("clustering input checks") {
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a"}, {{0}})), ArgumentError);
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a", "b"}, {{0, 1}})), ArgumentError);
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a", "a"}, {{0, 1}, {1, 0}})), ArgumentError);
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a", "b"}, {{0, 1}, {2, 0}})), ArgumentError);
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a", "b"}, {{0.1, 1}, {1, 0}})), ArgumentError);
    CHECK_THROWS_AS(agglomerative_cluster(matrix_of({"a", "b"}, {{0, NAN}, {NAN, 0}})), ArgumentError);
    CHECK(parse_linkage("average") == Linkage::Average);
    CHECK_THROWS_AS(parse_linkage("ward"), ArgumentError);
}

TEST_CASE("norm table") {
    const auto rows = norm_table({{"x", vec({3, 4})}, {"y", vec({1, 1, 1, 1})}, {"a", vec({0, 2})}, {"b", vec({2, 0})}});
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].label == "x");
    CHECK(rows[0].norm == doctest::Approx(5.0));
    CHECK(rows[1].label == "a");
    CHECK(rows[2].label == "b");
    CHECK(rows[3].label == "y");
    std::mt19937_64 gen(1);
    std::normal_distribution<float> nd;
    std::vector<float> big(64);
    double sq = 0.0;
    for (float& x : big) {
        x = nd(gen);
        sq += static_cast<double>(x) * x;
    }
    CHECK(norm_table({{"r", vec(big)}})[0].norm == doctest::Approx(std::sqrt(sq)).epsilon(1e-9));
}

TEST_CASE("compute subsets") {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("c" + std::to_string(i));
    const auto full = compute_subset(ids, 1.0, 5);
    CHECK(full == ids);
    std::vector<std::string> prev;
    for (double f : kDefaultFractions) {
        const auto sub = compute_subset(ids, f, 5);
        CHECK(sub.size() == static_cast<std::size_t>(std::floor(f * 20 + 1e-9)));
        // Listed in original order, drawn without repeats.
        std::vector<std::size_t> pos;
        for (const auto& s : sub) pos.push_back(static_cast<std::size_t>(std::find(ids.begin(), ids.end(), s) - ids.begin()));
        CHECK(std::is_sorted(pos.begin(), pos.end()));
        CHECK(std::set<std::string>(sub.begin(), sub.end()).size() == sub.size());
        // Larger fractions extend smaller ones.
        for (const auto& p : prev) CHECK(std::find(sub.begin(), sub.end(), p) != sub.end());
        prev = sub;
    }
    CHECK(compute_subset(ids, 0.25, 5) == compute_subset(ids, 0.25, 5));
    CHECK(compute_subset(ids, 0.25, 5) != compute_subset(ids, 0.25, 6));
    CHECK(compute_subset({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"}, 0.3, 0).size() == 3);
    CHECK_THROWS_AS(compute_subset(ids, 0.01, 5), ArgumentError);
    CHECK_THROWS_AS(compute_subset(ids, 0.0, 5), ArgumentError);
    CHECK_THROWS_AS(compute_subset(ids, 1.5, 5), ArgumentError);
}

TEST_CASE("csv writers") {
    const DistanceMatrix m = matrix_of({"a", "b"}, {{0, 0.5}, {0.5, 0}});
    const std::string csv = distance_matrix_csv(m);
    CHECK(csv.substr(0, csv.find('\n')) == "label,a,b");
    CHECK(norm_table_csv({{"x", 5.0}}).find("x,") != std::string::npos);
    const Dendrogram d = agglomerative_cluster(m);
    CHECK(merges_csv(d) == "step,left,right,distance,members\n1,0,1,0.5,a;b\n");
}
