#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "langsteer/cli.hpp"

using namespace langsteer;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "langsteer");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

const char* kTinyTestbed = R"({
  "seed": 3,
  "testbed": {"dialects": ["en", "xa", "xb"], "tokens_per_dialect": 4, "overlap": [],
              "question_length": 2, "num_examples": 12, "train_per_dialect": 10,
              "num_layers": 2, "hidden_size": 16, "num_heads": 2, "max_seq_len": 64,
              "k": 1, "episodes": 40, "steps": 4, "batch_size": 2, "warmup_steps": 1}
})";

// Trains the tiny testbed once per test binary.
fs::path tiny_testbed() {
    static const fs::path dir = [] {
        const fs::path d = testutil::temp_dir("cli-toy");
        write(d / "train.json", kTinyTestbed);
        const Result r = cli({"train-toy", "--config", (d / "train.json").string(), "--out", (d / "toy").string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        return d / "toy";
    }();
    return dir;
}

fs::path grid_config(const fs::path& dir) {
    const fs::path toy = tiny_testbed();
    nlohmann::json cfg = {{"seed", 1},
                          {"model", (toy / "model.bin").string()},
                          {"corpus", (toy / "reverse.jsonl").string()},
                          {"task", "reverse"},
                          {"template", "reverse"},
                          {"target_langs", {"xa"}},
                          {"layers", {1, 2}},
                          {"alphas", {1.0, 2.0}},
                          {"k", 1}};
    write(dir / "grid.json", cfg.dump(2));
    return dir / "grid.json";
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"grid"}).code == kExitUsage);
    CHECK(cli({"frobnicate", "--config", "x.json"}).code == kExitUsage);
    CHECK(cli({"grid", "--config", "x.json", "--bogus"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);

    const fs::path d = testutil::temp_dir("cli-usage");
    write(d / "unknown.json", R"({"seed": 1, "out": "o", "colour": "blue"})");
    CHECK(cli({"grid", "--config", (d / "unknown.json").string()}).code == kExitUsage);
    write(d / "noseed.json", R"({"out": "o"})");
    CHECK(cli({"make-dialects", "--config", (d / "noseed.json").string()}).code == kExitUsage);
    write(d / "noout.json", R"({"seed": 1})");
    CHECK(cli({"make-dialects", "--config", (d / "noout.json").string()}).code == kExitUsage);
    CHECK(cli({"make-dialects", "--config", (d / "noout.json").string(), "--out", (d / "o").string(), "--workers", "0"})
              .code == kExitUsage);
}

TEST_CASE("runtime failures exit with 1") {
    const fs::path d = testutil::temp_dir("cli-fail");
    write(d / "model.bin", "not a model");
    write(d / "corpus.jsonl", "{}\n");
    write(d / "c.json", R"({"seed": 1, "model": "model.bin", "corpus": "corpus.jsonl", "task": "math",
                            "template": "math", "target_lang": "xx"})");
    const Result r = cli({"grid", "--config", (d / "c.json").string(), "--out", (d / "o").string()});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("error:") != std::string::npos);

    write(d / "missing.json", R"({"seed": 1, "model": "nowhere.bin", "corpus": "corpus.jsonl", "task": "math",
                                  "template": "math", "target_lang": "xx"})");
    CHECK(cli({"grid", "--config", (d / "missing.json").string(), "--out", (d / "o").string()}).code == kExitUsage);
}

TEST_CASE("toy training writes its artifacts and a manifest") {
    const fs::path toy = tiny_testbed();
    for (const char* f : {"model.bin", "reverse.jsonl", "copy.jsonl", "lexicon.json", "train_loss.csv", "manifest.json"}) {
        CHECK(fs::exists(toy / f));
    }
    const auto manifest = nlohmann::json::parse(slurp(toy / "manifest.json"));
    CHECK(manifest.at("format") == "langsteer-manifest");
    CHECK(manifest.at("command") == "train-toy");
    CHECK(manifest.at("seeds").at("root") == 3);
    CHECK(!manifest.at("config").contains("workers"));
    CHECK(manifest.at("artifacts").at("model.bin").get<std::string>().rfind("fnv1a64:", 0) == 0);
}

TEST_CASE("grid runs are reproducible byte for byte") {
    const fs::path d = testutil::temp_dir("cli-grid");
    const fs::path cfg = grid_config(d);
    const Result a = cli({"grid", "--config", cfg.string(), "--out", (d / "a").string()});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const Result b = cli({"grid", "--config", cfg.string(), "--out", (d / "b").string(), "--workers", "3"});
    REQUIRE_MESSAGE(b.code == 0, b.err);
    for (const char* f : {"report-reverse-xa.json", "report-reverse-xa.csv", "report-reverse-xa-val.csv", "table.txt",
                          "manifest.json"}) {
        INFO(f);
        REQUIRE(fs::exists(d / "a" / f));
        CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
    }
    const std::string csv = slurp(d / "a" / "report-reverse-xa.csv");
    CHECK(csv.find("xa,reverse,B,") != std::string::npos);
    CHECK(csv.find("xa,reverse,MFS,") != std::string::npos);
    CHECK(csv.find("xa,reverse,Ours,") != std::string::npos);
    CHECK(csv.find("xa,reverse,OR,") != std::string::npos);

    // The manifest replays the run.
    const Result c = cli({"grid", "--config", (d / "a" / "manifest.json").string(), "--out", (d / "c").string()});
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(slurp(d / "c" / "report-reverse-xa.json") == slurp(d / "a" / "report-reverse-xa.json"));

    // A different seed changes the split.
    const Result e = cli({"grid", "--config", cfg.string(), "--out", (d / "e").string(), "--seed", "2"});
    REQUIRE(e.code == 0);
    CHECK(slurp(d / "e" / "manifest.json") != slurp(d / "a" / "manifest.json"));

    const Result t = cli({"report", (d / "a" / "report-reverse-xa.json").string()});
    CHECK(t.code == 0);
    CHECK(t.out == slurp(d / "a" / "table.txt"));
}

TEST_CASE("the installed binary reports usage errors") {
    const char* bin = std::getenv("LANGSTEER_BIN");
    if (bin == nullptr) return;
    const std::string cmd = std::string("\"") + bin + "\" grid > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == kExitUsage);
}
