#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/steering.hpp"

namespace langsteer {

using nlohmann::json;

namespace {
constexpr std::string_view kDumpMagic = "LVAD1\n";
}

std::string vector_to_json(const SteeringVector& v) {
    json j = {
        {"format_version", kVectorFormatVersion},
        {"model_id", v.meta.model_id},
        {"layer", v.layer},
        {"dim", v.values.size()},
        {"source_lang", v.meta.source_lang},
        {"target_lang", v.meta.target_lang},
        {"task", v.meta.task},
        {"pooling", to_string(v.meta.pooling)},
        {"n_samples", v.meta.n_samples},
        {"seed", v.meta.seed},
        {"values", v.values},
    };
    return j.dump(2);
}

SteeringVector vector_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("vector file is not valid JSON: ") + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kVectorFormatVersion) {
            throw FormatError("unsupported vector format_version " + std::to_string(version) +
                              " (supported: " + std::to_string(kVectorFormatVersion) + ")");
        }
        SteeringVector v;
        v.layer = j.at("layer").get<int>();
        const auto dim = j.at("dim").get<std::size_t>();
        v.values = j.at("values").get<std::vector<float>>();
        if (dim != v.values.size()) {
            throw FormatError("vector dim field is " + std::to_string(dim) + " but " +
                              std::to_string(v.values.size()) + " values are stored");
        }
        if (v.layer < 1) throw FormatError("vector layer must be >= 1");
        for (float x : v.values) {
            if (!std::isfinite(x)) throw FormatError("vector holds a non-finite value");
        }
        v.meta.model_id = j.at("model_id").get<std::string>();
        v.meta.source_lang = j.at("source_lang").get<std::string>();
        v.meta.target_lang = j.at("target_lang").get<std::string>();
        v.meta.task = j.at("task").get<std::string>();
        v.meta.pooling = parse_pooling(j.at("pooling").get<std::string>());
        v.meta.n_samples = j.at("n_samples").get<std::size_t>();
        v.meta.seed = j.at("seed").get<std::uint64_t>();
        return v;
    } catch (const json::exception& e) {
        throw FormatError(std::string("vector file: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("vector file: ") + e.what());
    }
}

void save_vector(const SteeringVector& v, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << vector_to_json(v) << '\n';
}

SteeringVector load_vector(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open vector file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return vector_from_json(ss.str());
}

void export_activation_dump(const PooledStateSet& states, const std::filesystem::path& path) {
    json header = {
        {"layer", states.layer},
        {"dim", states.states.cols},
        {"n", states.states.rows},
        {"lang", states.lang},
        {"pooling", to_string(states.pooling)},
        {"model_id", states.model_id},
    };
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(kDumpMagic.data(), kDumpMagic.size());
    detail::put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::put_f32s(out, states.states.data);
}

PooledStateSet import_activation_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open activation dump: " + path.string());
    detail::Reader r(in, "activation dump " + path.string());
    r.expect_magic(kDumpMagic);
    const std::uint64_t len = r.u64();
    if (len > (1u << 24)) throw FormatError("activation dump header length is implausible");
    json header;
    try {
        header = json::parse(r.str(len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("activation dump header is not valid JSON: ") + e.what());
    }
    PooledStateSet s;
    std::size_t n = 0, dim = 0;
    try {
        s.layer = header.at("layer").get<int>();
        dim = header.at("dim").get<std::size_t>();
        n = header.at("n").get<std::size_t>();
        s.lang = header.at("lang").get<std::string>();
        s.pooling = parse_pooling(header.at("pooling").get<std::string>());
        s.model_id = header.at("model_id").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("activation dump header: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("activation dump header: ") + e.what());
    }
    if (n == 0) throw ArgumentError("activation dump holds no rows");
    if (dim == 0) throw FormatError("activation dump has zero width");
    if (s.layer < 1) throw FormatError("activation dump layer must be >= 1");
    const std::uintmax_t body = std::filesystem::file_size(path) - (kDumpMagic.size() + 8 + len);
    if (body / sizeof(float) / dim < n) {
        throw FormatError("activation dump truncated: header declares " + std::to_string(n) + " rows of " +
                          std::to_string(dim) + " but only " + std::to_string(body / sizeof(float) / dim) +
                          " are present");
    }
    s.states = Matrix(n, dim);
    r.f32s(s.states.data);
    if (!r.at_end()) throw FormatError("activation dump has trailing bytes after " + std::to_string(n) + " rows");
    for (float x : s.states.data) {
        if (!std::isfinite(x)) throw FormatError("activation dump holds a non-finite value");
    }
    return s;
}

}  // namespace langsteer
