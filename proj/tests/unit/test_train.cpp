#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "helpers.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/train.hpp"
#include "oracle.hpp"

using namespace langsteer;

namespace {

std::vector<TokenSequence> pattern_corpus() {
    // Repeating patterns a model can learn quickly.
    std::vector<TokenSequence> c;
    for (int s = 0; s < 12; ++s) {
        TokenSequence t;
        for (int i = 0; i < 10; ++i) t.push_back(1 + (s + i * (1 + s % 3)) % 8);
        c.push_back(t);
    }
    return c;
}

ModelConfig small_config() {
    ModelConfig c;
    c.num_layers = 2;
    c.hidden_size = 16;
    c.num_heads = 2;
    c.vocab_size = 12;
    c.max_seq_len = 16;
    return c;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences of the oracle loss") {
    const ToyModel m = testutil::random_model(2, 8, 2, 7, 12, 11);
    const std::vector<TokenId> seq = {1, 4, 2, 7, 3, 3, 0, 5};
    ModelWeights grads = ModelWeights::zeros(m.config());
    const double loss = loss_and_gradient(m, seq, grads);
    CHECK(std::abs(loss - testutil::oracle_mean_loss(m, {seq})) < 1e-4);

    const auto gp = named_params(grads, m.config());
    std::mt19937_64 gen(0);
    int checked = 0;
    for (std::size_t pi = 0; pi < gp.size(); ++pi) {
        for (int rep = 0; rep < 3; ++rep) {
            const std::size_t idx = gen() % gp[pi].values->size();
            const double h = 1e-3;
            double f[2];
            for (int side = 0; side < 2; ++side) {
                ModelWeights w = m.weights();
                auto params = named_params(w, m.config());
                (*params[pi].values)[idx] += static_cast<float>(side == 0 ? h : -h);
                const ToyModel shifted(m.config(), m.vocab(), w);
                f[side] = testutil::oracle_mean_loss(shifted, {seq});
            }
            const double numeric = (f[0] - f[1]) / (2 * h);
            const double analytic = (*gp[pi].values)[idx];
            INFO(gp[pi].name << "[" << idx << "] numeric " << numeric << " analytic " << analytic);
            CHECK(std::abs(numeric - analytic) < 2e-3 + 2e-2 * std::abs(numeric));
            ++checked;
        }
    }
    CHECK(checked > 30);
}

TEST_CASE("training lowers the loss measured by the independent oracle") {
    const ModelConfig c = small_config();
    const auto corpus = pattern_corpus();
    TrainOptions o;
    o.steps = 150;
    o.learn_rate = 1e-2f;
    o.seed = 0;
    o.warmup_steps = 10;
    const ToyModel trained = train_toy(c, testutil::word_vocab(11), corpus, o);
    ModelConfig init_cfg = c;
    init_cfg.seed = 0;
    const ToyModel initial(init_cfg, testutil::word_vocab(11), init_weights(init_cfg));
    const double before = testutil::oracle_mean_loss(initial, corpus);
    const double after = testutil::oracle_mean_loss(trained, corpus);
    CHECK(after < before);
    CHECK(after < 0.5 * before);
    CHECK(std::abs(mean_loss(trained, corpus) - after) < 1e-4);
}

TEST_CASE("same seed gives byte-identical parameters") {
    const ModelConfig c = small_config();
    const auto corpus = pattern_corpus();
    const ToyModel a = train_toy(c, testutil::word_vocab(11), corpus, 30, 5e-3f, 9);
    const ToyModel b = train_toy(c, testutil::word_vocab(11), corpus, 30, 5e-3f, 9);
    const auto pa = named_params(a.weights(), a.config());
    const auto pb = named_params(b.weights(), b.config());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(std::memcmp(pa[i].values->data(), pb[i].values->data(), pa[i].values->size() * 4) == 0);
    }
    const ToyModel other = train_toy(c, testutil::word_vocab(11), corpus, 30, 5e-3f, 10);
    CHECK(other.hash() != a.hash());
}

TEST_CASE("argument errors") {
    const ModelConfig c = small_config();
    CHECK_THROWS_AS(train_toy(c, testutil::word_vocab(11), {}, 10, 1e-3f, 0), ArgumentError);
    CHECK_THROWS_AS(train_toy(c, testutil::word_vocab(11), pattern_corpus(), 0, 1e-3f, 0), ArgumentError);
    CHECK_THROWS_AS(train_toy(c, testutil::word_vocab(5), pattern_corpus(), 10, 1e-3f, 0), ArgumentError);
}

TEST_CASE("divergence reports the step") {
    const ModelConfig c = small_config();
    TrainOptions o;
    o.steps = 50;
    o.learn_rate = 1e30f;
    o.warmup_steps = 0;
    try {
        train_toy(c, testutil::word_vocab(11), pattern_corpus(), o);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() >= 1);
        CHECK(e.step() <= 50);
    }
}
