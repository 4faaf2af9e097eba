#include <fstream>
#include <map>

#include <json.hpp>

#include "binary_io.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/model.hpp"

namespace langsteer {

using nlohmann::json;

namespace {
constexpr std::string_view kMagic = "LVTM1\n";
constexpr std::uint64_t kMaxHeaderBytes = 1u << 26;
}  // namespace

void save_model(const ToyModel& model, const std::filesystem::path& path) {
    const ModelConfig& c = model.config();
    json header = {
        {"num_layers", c.num_layers}, {"hidden_size", c.hidden_size}, {"num_heads", c.num_heads},
        {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"seed", c.seed},
        {"vocab", model.vocab().symbols()},
    };
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    detail::put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : named_params(model.weights(), c)) {
        detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (std::size_t dim : p.shape) detail::put_u64(out, dim);
        detail::put_f32s(out, *p.values);
    }
    if (!out) throw Error("write failed: " + path.string());
}

ToyModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file: " + path.string());
    detail::Reader r(in, "model file " + path.string());
    r.expect_magic(kMagic);

    const std::uint64_t header_len = r.u64();
    if (header_len > kMaxHeaderBytes) throw FormatError("model header length is implausible");
    json header;
    try {
        header = json::parse(r.str(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header is not valid JSON: ") + e.what());
    }

    ModelConfig c;
    std::vector<std::string> symbols;
    try {
        c.num_layers = header.at("num_layers").get<int>();
        c.hidden_size = header.at("hidden_size").get<int>();
        c.num_heads = header.at("num_heads").get<int>();
        c.vocab_size = header.at("vocab_size").get<int>();
        c.max_seq_len = header.at("max_seq_len").get<int>();
        c.seed = header.at("seed").get<std::uint64_t>();
        symbols = header.at("vocab").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header missing field: ") + e.what());
    }
    try {
        c.validate();
    } catch (const ArgumentError& e) {
        throw IntegrityError(std::string("model config invalid: ") + e.what());
    }

    ModelWeights w = ModelWeights::zeros(c);
    std::map<std::string, ParamRef> expected;
    for (auto& p : named_params(w, c)) expected.emplace(p.name, p);

    std::string prev;
    while (!r.at_end()) {
        const std::uint32_t name_len = r.u32();
        if (name_len == 0 || name_len > 4096) throw FormatError("implausible tensor name length");
        std::string name = r.str(name_len);
        if (!prev.empty() && name <= prev) throw FormatError("tensors not in sorted name order at " + name);
        prev = name;
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw FormatError("implausible tensor rank for " + name);
        std::vector<std::size_t> dims(rank);
        for (auto& dim : dims) dim = r.u64();

        auto it = expected.find(name);
        if (it == expected.end()) throw IntegrityError("unexpected tensor " + name);
        if (dims != it->second.shape) {
            std::string got, want;
            for (auto x : dims) got += std::to_string(x) + " ";
            for (auto x : it->second.shape) want += std::to_string(x) + " ";
            throw IntegrityError("tensor " + name + " has shape [ " + got + "] but config implies [ " + want + "]");
        }
        r.f32s(*it->second.values);
        expected.erase(it);
    }
    if (!expected.empty()) throw IntegrityError("missing tensor " + expected.begin()->first);

    try {
        return ToyModel(c, Vocab(std::move(symbols)), std::move(w));
    } catch (const VocabularyError& e) {
        throw IntegrityError(std::string("model vocabulary invalid: ") + e.what());
    }
}

}  // namespace langsteer
