#include <doctest.h>

#include <fstream>
#include <random>

#include "helpers.hpp"
#include "oracle.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/steering.hpp"

using namespace langsteer;

namespace {

Matrix mat(std::size_t r, std::size_t c, std::vector<float> v) {
    Matrix m(r, c);
    m.data = std::move(v);
    return m;
}

PooledStateSet set_of(Matrix m, int layer = 2, std::string lang = "") {
    PooledStateSet s;
    s.layer = layer;
    s.states = std::move(m);
    s.lang = std::move(lang);
    return s;
}

RenderedPrompt spans(std::size_t sys, std::size_t few, std::size_t q) {
    RenderedPrompt p;
    p.tokens.assign(sys + few + q, 0);
    p.system = {0, sys};
    p.fewshot = {sys, sys + few};
    p.question = {sys + few, sys + few + q};
    return p;
}

std::vector<std::string> word_texts(std::mt19937_64& gen, int count, int vocab_words) {
    std::vector<std::string> out;
    std::uniform_int_distribution<int> len(1, 7), w(0, vocab_words - 1);
    for (int i = 0; i < count; ++i) {
        std::string t;
        const int n = len(gen);
        for (int j = 0; j < n; ++j) t += (j ? " w" : "w") + std::to_string(w(gen));
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST_CASE("pooling by hand") {
    const Matrix two = mat(2, 2, {1, 2, 3, 4});
    CHECK(pool_trace(two, Pooling::Mean) == std::vector<float>{2, 3});
    CHECK(pool_trace(two, Pooling::Last) == std::vector<float>{3, 4});
    const Matrix one = mat(1, 3, {5, -1, 0.5f});
    CHECK(pool_trace(one, Pooling::Mean) == pool_trace(one, Pooling::Last));
    CHECK_THROWS_AS(pool_trace(Matrix(0, 3), Pooling::Mean), ArgumentError);
}

TEST_CASE("mean pooling ignores row order") {
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<int> small(-8, 8);
    Matrix m(6, 4);
    // Quarter-integers keep every partial sum exact.
    for (float& x : m.data) x = static_cast<float>(small(gen)) * 0.25f;
    Matrix r(6, 4);
    const int order[6] = {5, 2, 0, 4, 1, 3};
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) r(i, j) = m(order[i], j);
    CHECK(pool_trace(m, Pooling::Mean) == pool_trace(r, Pooling::Mean));
}

TEST_CASE("language vector by hand") {
    const auto src = set_of(mat(3, 2, {0, 0, 1, 1, 2, 4}), 2, "en");
    const auto tgt = set_of(mat(3, 2, {3, 0, 1, 4, 2, 5}), 2, "xx");
    const SteeringVector v = compute_language_vector(src, tgt);
    CHECK(v.layer == 2);
    CHECK(v.values[0] == doctest::Approx(1.0));
    CHECK(v.values[1] == doctest::Approx(4.0 / 3.0));
    CHECK(v.meta.source_lang == "en");
    CHECK(v.meta.target_lang == "xx");
    CHECK(v.meta.n_samples == 3);

    const SteeringVector back = compute_language_vector(tgt, src);
    for (std::size_t j = 0; j < 2; ++j) CHECK(back.values[j] == -v.values[j]);
    CHECK(compute_language_vector(src, src).values == std::vector<float>{0, 0});
}

TEST_CASE("language vector argument checks") {
    const auto a = set_of(mat(2, 2, {0, 0, 1, 1}), 2);
    CHECK_THROWS_AS(compute_language_vector(a, set_of(mat(2, 2, {0, 0, 1, 1}), 3)), ArgumentError);
    CHECK_THROWS_AS(compute_language_vector(a, set_of(mat(1, 2, {0, 0}), 2)), ArgumentError);
    CHECK_THROWS_AS(compute_language_vector(a, set_of(mat(2, 1, {0, 0}), 2)), ArgumentError);
    CHECK_THROWS_AS(compute_language_vector(set_of(Matrix(0, 2)), set_of(Matrix(0, 2))), ArgumentError);
}

TEST_CASE("pooled states agree with the oracle forward") {
    const ToyModel m = testutil::random_model();
    std::mt19937_64 gen(11);
    const auto texts = word_texts(gen, 8, 11);
    for (Pooling pooling : {Pooling::Mean, Pooling::Last}) {
        const PooledStateSet s = pooled_hidden_states(m, texts, 2, pooling, "en");
        REQUIRE(s.states.rows == texts.size());
        CHECK(s.model_id == m.id());
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const auto toks = m.vocab().tokenize(texts[i]);
            const auto ref = testutil::oracle_forward(m, toks, {});
            const auto& st = ref.states.at(2);
            for (std::size_t j = 0; j < s.states.cols; ++j) {
                double want = 0.0;
                if (pooling == Pooling::Last) {
                    want = st.back()[j];
                } else {
                    for (const auto& row : st) want += row[j];
                    want /= static_cast<double>(st.size());
                }
                CHECK(s.states(i, j) == doctest::Approx(want).epsilon(1e-4).scale(1.0));
            }
        }
    }
}

TEST_CASE("multi-layer pooling and worker count do not change results") {
    const ToyModel m = testutil::random_model();
    std::mt19937_64 gen(12);
    const auto texts = word_texts(gen, 9, 11);
    const auto multi = pooled_hidden_states_multi(m, texts, {1, 2}, Pooling::Mean, "en", 4);
    for (int l : {1, 2}) {
        const auto single = pooled_hidden_states(m, texts, l, Pooling::Mean, "en", 1);
        CHECK(multi.at(l).states == single.states);
        CHECK(multi.at(l).text_hashes == single.text_hashes);
    }
    CHECK_THROWS_AS(pooled_hidden_states(m, texts, 3, Pooling::Mean), ArgumentError);
    CHECK_THROWS_AS(pooled_hidden_states(m, texts, 0, Pooling::Mean), ArgumentError);
    CHECK_THROWS_AS(pooled_hidden_states(m, {}, 1, Pooling::Mean), ArgumentError);
    CHECK_THROWS_AS(pooled_hidden_states(m, {""}, 1, Pooling::Mean), ArgumentError);
}

TEST_CASE("resolve positions") {
    const RenderedPrompt p = spans(2, 3, 4);
    CHECK(resolve_positions(p, PositionMode::OnFewshot) == std::vector<std::size_t>{2, 3, 4});
    CHECK(resolve_positions(p, PositionMode::AfterFewshot) == std::vector<std::size_t>{5});
    CHECK(resolve_positions(p, PositionMode::OnQuestion) == std::vector<std::size_t>{5, 6, 7, 8});
    CHECK(resolve_positions(p, PositionMode::Entire).size() == 9);

    const RenderedPrompt no_demos = spans(2, 0, 3);
    CHECK(resolve_positions(no_demos, PositionMode::OnFewshot).empty());
    CHECK(resolve_positions(no_demos, PositionMode::AfterFewshot) == std::vector<std::size_t>{2});

    CHECK_THROWS_AS(resolve_positions(spans(2, 3, 0), PositionMode::AfterFewshot), ArgumentError);
    RenderedPrompt gap = spans(2, 3, 4);
    gap.question.begin = 6;
    CHECK_THROWS_AS(resolve_positions(gap, PositionMode::Entire), ArgumentError);
}

TEST_CASE("mode names round trip") {
    for (PositionMode m : kAllPositionModes) CHECK(parse_position_mode(to_string(m)) == m);
    CHECK(parse_pooling("last") == Pooling::Last);
    CHECK_THROWS_AS(parse_position_mode("middle"), ArgumentError);
    CHECK_THROWS_AS(parse_pooling("max"), ArgumentError);
}

TEST_CASE("plans") {
    SteeringVector v;
    v.layer = 2;
    v.values = {1, 2};
    CHECK_THROWS_AS(make_plan(v, std::nan(""), PositionMode::Entire), ArgumentError);
    SteeringPlan plan = make_plan(v, 3.0, PositionMode::OnQuestion);
    const auto specs = plan_interventions(spans(1, 2, 3), plan);
    REQUIRE(specs.size() == 1);
    CHECK(specs[0].positions == std::vector<std::size_t>{3, 4, 5});
    CHECK(specs[0].scale == 3.0);
    CHECK(specs[0].layer == 2);
    CHECK(plan_interventions(spans(1, 0, 3), make_plan(v, 1.0, PositionMode::OnFewshot)).empty());
    plan.layer = 1;
    CHECK_THROWS_AS(plan_interventions(spans(1, 2, 3), plan), ArgumentError);
}

TEST_CASE("a zero vector and alpha = 0 leave generation unchanged") {
    const ToyModel m = testutil::random_model();
    std::mt19937_64 gen(5);
    RenderedPrompt p;
    p.tokens = testutil::random_tokens(gen, 9, static_cast<int>(m.vocab().size()));
    p.system = {0, 2};
    p.fewshot = {2, 6};
    p.question = {6, 9};
    const auto plain = generate(m, p, std::nullopt, 8);
    SteeringVector zero;
    zero.layer = 1;
    zero.values.assign(16, 0.0f);
    SteeringVector big;
    big.layer = 2;
    big.values = testutil::random_vector(gen, 16, 5.0);
    for (PositionMode mode : kAllPositionModes) {
        CHECK(generate(m, p, make_plan(zero, 4.0, mode), 8) == plain);
        CHECK(generate(m, p, make_plan(big, 0.0, mode), 8) == plain);
    }
    SteeringVector wrong = big;
    wrong.values.resize(8);
    CHECK_THROWS_AS(generate(m, p, make_plan(wrong, 1.0, PositionMode::Entire), 4), ArgumentError);
}

TEST_CASE("vector files") {
    SteeringVector v;
    v.layer = 3;
    v.values = {0.5f, -1.25f, 3.0e-7f, 1234.5f};
    v.meta = {"model-x", "en", "xx", "math", Pooling::Last, 17, 99};
    const auto dir = testutil::temp_dir("vectors");
    save_vector(v, dir / "v.json");
    CHECK(load_vector(dir / "v.json") == v);
    CHECK(vector_from_json(vector_to_json(v)) == v);

    auto edited = [&](const std::string& from, const std::string& to) {
        std::string text = vector_to_json(v);
        const auto at = text.find(from);
        REQUIRE(at != std::string::npos);
        text.replace(at, from.size(), to);
        return text;
    };
    CHECK_THROWS_AS(vector_from_json("{nope"), FormatError);
    CHECK_THROWS_AS(vector_from_json(edited("\"format_version\": 1", "\"format_version\": 2")), FormatError);
    CHECK_THROWS_AS(vector_from_json(edited("\"dim\": 4", "\"dim\": 5")), FormatError);
    CHECK_THROWS_AS(vector_from_json(edited("\"layer\": 3", "\"layer\": 0")), FormatError);
    CHECK_THROWS_AS(load_vector(dir / "missing.json"), Error);
}

TEST_CASE("activation dumps") {
    const auto dir = testutil::temp_dir("dumps");
    PooledStateSet s = set_of(mat(3, 2, {1, 2, 3, 4, 5, 6.5f}), 4, "xx");
    s.pooling = Pooling::Last;
    s.model_id = "m1";
    export_activation_dump(s, dir / "a.bin");
    const PooledStateSet back = import_activation_dump(dir / "a.bin");
    CHECK(back.states == s.states);
    CHECK(back.layer == 4);
    CHECK(back.lang == "xx");
    CHECK(back.pooling == Pooling::Last);
    CHECK(back.model_id == "m1");

    export_activation_dump(set_of(Matrix(0, 2)), dir / "empty.bin");
    CHECK_THROWS_AS(import_activation_dump(dir / "empty.bin"), ArgumentError);

    const auto full = std::filesystem::file_size(dir / "a.bin");
    std::filesystem::copy_file(dir / "a.bin", dir / "short.bin");
    std::filesystem::resize_file(dir / "short.bin", full - 3);
    CHECK_THROWS_AS(import_activation_dump(dir / "short.bin"), FormatError);
    {
        std::ofstream f(dir / "a.bin", std::ios::app | std::ios::binary);
        f << "xx";
    }
    CHECK_THROWS_AS(import_activation_dump(dir / "a.bin"), FormatError);
    {
        std::ofstream f(dir / "bad.bin", std::ios::binary);
        f << "NOTADUMP";
    }
    CHECK_THROWS_AS(import_activation_dump(dir / "bad.bin"), FormatError);
}

TEST_CASE("vectors from imported dumps equal direct computation") {
    const ToyModel m = testutil::random_model();
    std::mt19937_64 gen(21);
    const auto a = word_texts(gen, 5, 11), b = word_texts(gen, 5, 11);
    const auto src = pooled_hidden_states(m, a, 1, Pooling::Mean, "en");
    const auto tgt = pooled_hidden_states(m, b, 1, Pooling::Mean, "xx");
    const auto dir = testutil::temp_dir("dump-vectors");
    export_activation_dump(src, dir / "s.bin");
    export_activation_dump(tgt, dir / "t.bin");
    CHECK(compute_language_vector(import_activation_dump(dir / "s.bin"), import_activation_dump(dir / "t.bin")).values ==
          compute_language_vector(src, tgt).values);
}
