#include <doctest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/model.hpp"

using namespace langsteer;

TEST_CASE("config invariants") {
    ModelConfig c;
    c.vocab_size = 10;
    CHECK_NOTHROW(c.validate());
    c.num_heads = 3;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c.num_heads = 4;
    c.num_layers = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c.num_layers = 1;
    c.max_seq_len = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("parameter names are sorted and shapes consistent") {
    const ToyModel m = testutil::random_model();
    const auto params = named_params(m.weights(), m.config());
    for (std::size_t i = 1; i < params.size(); ++i) CHECK(params[i - 1].name < params[i].name);
    for (const auto& p : params) {
        std::size_t n = 1;
        for (auto s : p.shape) n *= s;
        CHECK(n == p.values->size());
    }
}

TEST_CASE("init is deterministic per seed") {
    ModelConfig c;
    c.vocab_size = 12;
    c.hidden_size = 16;
    c.num_heads = 2;
    c.seed = 3;
    const ModelWeights a = init_weights(c);
    const ModelWeights b = init_weights(c);
    CHECK(a.tok_emb == b.tok_emb);
    CHECK(a.blocks[0].w_qkv == b.blocks[0].w_qkv);
    c.seed = 4;
    CHECK(init_weights(c).tok_emb != a.tok_emb);
}

TEST_CASE("non-finite parameters are rejected") {
    ModelConfig c;
    c.vocab_size = 12;
    c.hidden_size = 16;
    c.num_heads = 2;
    ModelWeights w = init_weights(c);
    w.blocks[0].b_fc[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(ToyModel(c, testutil::word_vocab(11), w), IntegrityError);
}

TEST_CASE("save and load round trip is bit identical") {
    const auto dir = testutil::temp_dir("model-io");
    const ToyModel m = testutil::random_model(3, 16, 4);
    save_model(m, dir / "m.bin");
    const ToyModel back = load_model(dir / "m.bin");
    CHECK(back.config() == m.config());
    CHECK(back.vocab() == m.vocab());
    CHECK(back.hash() == m.hash());
    const auto a = named_params(m.weights(), m.config());
    const auto b = named_params(back.weights(), back.config());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].values->size() == b[i].values->size());
        CHECK(std::memcmp(a[i].values->data(), b[i].values->data(), a[i].values->size() * sizeof(float)) == 0);
    }
    save_model(back, dir / "m2.bin");
    std::ifstream f1(dir / "m.bin", std::ios::binary), f2(dir / "m2.bin", std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

}  // namespace

TEST_CASE("wrong magic is a format error") {
    const auto dir = testutil::temp_dir("model-magic");
    save_model(testutil::random_model(), dir / "m.bin");
    std::string bytes = slurp(dir / "m.bin");
    bytes[0] = 'X';
    spit(dir / "bad.bin", bytes);
    CHECK_THROWS_AS(load_model(dir / "bad.bin"), FormatError);
    spit(dir / "short.bin", bytes.substr(0, 3));
    CHECK_THROWS_AS(load_model(dir / "short.bin"), FormatError);
}

TEST_CASE("truncated tensor data is a format error") {
    const auto dir = testutil::temp_dir("model-trunc");
    save_model(testutil::random_model(), dir / "m.bin");
    const std::string bytes = slurp(dir / "m.bin");
    spit(dir / "t.bin", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_model(dir / "t.bin"), FormatError);
}

TEST_CASE("declared width 64 with a 63-column tensor is an integrity error") {
    const auto dir = testutil::temp_dir("model-dim");
    ModelConfig c;
    c.hidden_size = 64;
    c.num_heads = 4;
    c.num_layers = 1;
    c.vocab_size = 12;
    c.max_seq_len = 8;
    const ToyModel m(c, testutil::word_vocab(11), init_weights(c));
    save_model(m, dir / "m.bin");
    std::string bytes = slurp(dir / "m.bin");

    // Patch the row count of head.weight from 64 to 63.
    const std::string name = "head.weight";
    const auto at = bytes.find(name);
    REQUIRE(at != std::string::npos);
    const std::size_t dims_at = at + name.size() + 4;  // after u32 rank
    std::uint64_t rows = 0;
    std::memcpy(&rows, bytes.data() + dims_at, 8);
    REQUIRE(rows == 64);
    rows = 63;
    std::memcpy(bytes.data() + dims_at, &rows, 8);
    spit(dir / "bad.bin", bytes);
    CHECK_THROWS_AS(load_model(dir / "bad.bin"), IntegrityError);
}
