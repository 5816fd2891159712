#include "kvw/coeffs.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kvw/errors.hpp"

namespace kvw {

CoeffMode coeff_mode_from_string(const std::string & s) {
    if (s == "magnitude") return CoeffMode::magnitude;
    if (s == "clamped") return CoeffMode::clamped;
    throw config_error("unknown coeff mode: " + s);
}

std::string to_string(CoeffMode m) {
    return m == CoeffMode::magnitude ? "magnitude" : "clamped";
}

void KnowledgeCoefficients::check_compatible(const ModelConfig & config) const {
    if (layer_count() != static_cast<size_t>(config.num_layers)) {
        throw config_error("coefficient cache has " + std::to_string(layer_count()) +
                           " layers, model has " + std::to_string(config.num_layers));
    }
    if (width() != static_cast<size_t>(config.ffn_dim)) {
        throw config_error("coefficient cache width " + std::to_string(width()) +
                           " does not match model ffn_dim " + std::to_string(config.ffn_dim));
    }
    if (token_count == 0) throw config_error("coefficient cache has token_count 0");
}

void CoeffAccumulator::init(size_t layers, size_t m) {
    sums.assign(layers, std::vector<double>(m, 0.0));
    count = 0;
}

void CoeffAccumulator::add_example(const TokenExample & ex, const ModelWeights & weights,
                                   bool ans_only, CoeffMode mode) {
    ex.validate(weights.config);
    if (ans_only && ex.answer_count() == 0) {
        throw input_error("ans_only extraction selected no positions (empty answer mask)");
    }

    ForwardTrace trace = forward_with_trace(weights, ex.tokens);
    const size_t m = static_cast<size_t>(weights.config.ffn_dim);

    for (size_t t = 0; t < ex.tokens.size(); t++) {
        if (ans_only && !ex.answer_mask[t]) continue;
        for (size_t l = 0; l < sums.size(); l++) {
            const float * row = trace.coeffs[l].row(t);
            std::vector<double> & acc = sums[l];
            if (mode == CoeffMode::magnitude) {
                for (size_t i = 0; i < m; i++) acc[i] += std::fabs(static_cast<double>(row[i]));
            } else {
                for (size_t i = 0; i < m; i++) acc[i] += row[i] > 0.0f ? static_cast<double>(row[i]) : 0.0;
            }
        }
        count++;
    }
}

void CoeffAccumulator::merge(const CoeffAccumulator & other) {
    if (sums.size() != other.sums.size()) throw config_error("accumulator layer count mismatch");
    for (size_t l = 0; l < sums.size(); l++) {
        if (sums[l].size() != other.sums[l].size()) throw config_error("accumulator width mismatch");
        for (size_t i = 0; i < sums[l].size(); i++) sums[l][i] += other.sums[l][i];
    }
    count += other.count;
}

KnowledgeCoefficients CoeffAccumulator::finish(CoeffSource source) const {
    if (count == 0) throw input_error("no positions accumulated");
    KnowledgeCoefficients out;
    out.source = source;
    out.token_count = count;
    out.per_layer.resize(sums.size());
    for (size_t l = 0; l < sums.size(); l++) {
        out.per_layer[l].resize(sums[l].size());
        for (size_t i = 0; i < sums[l].size(); i++) {
            out.per_layer[l][i] = static_cast<float>(sums[l][i] / static_cast<double>(count));
        }
    }
    return out;
}

KnowledgeCoefficients extract_coefficients(const TokenExample & ex, const ModelWeights & weights,
                                           bool ans_only, CoeffMode mode, CoeffSource source) {
    CoeffAccumulator acc;
    acc.init(static_cast<size_t>(weights.config.num_layers),
             static_cast<size_t>(weights.config.ffn_dim));
    acc.add_example(ex, weights, ans_only, mode);
    return acc.finish(source);
}

KnowledgeCoefficients accumulate(const Dataset & examples, const ModelWeights & weights,
                                 bool ans_only, CoeffMode mode, CoeffSource source) {
    if (examples.empty()) throw input_error("cannot accumulate coefficients over an empty dataset");
    CoeffAccumulator acc;
    acc.init(static_cast<size_t>(weights.config.num_layers),
             static_cast<size_t>(weights.config.ffn_dim));
    for (const TokenExample & ex : examples) acc.add_example(ex, weights, ans_only, mode);
    return acc.finish(source);
}

namespace {
constexpr char kCoeffMagic[8] = {'K', 'V', 'W', 'C', 'O', 'E', 'F', '1'};

template <typename T>
void write_pod(std::ofstream & f, T v) {
    f.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream & f, const std::string & path) {
    T v{};
    f.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (static_cast<size_t>(f.gcount()) != sizeof(T)) {
        throw input_error("corrupt coefficient cache (truncated): " + path);
    }
    return v;
}
}  // namespace

void save_coeffs(const KnowledgeCoefficients & c, const std::string & path, uint64_t dataset_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw input_error("cannot open for writing: " + path);
    f.write(kCoeffMagic, sizeof(kCoeffMagic));
    write_pod<uint32_t>(f, static_cast<uint32_t>(c.layer_count()));
    write_pod<uint32_t>(f, static_cast<uint32_t>(c.width()));
    write_pod<uint64_t>(f, c.token_count);
    write_pod<uint8_t>(f, c.source == CoeffSource::forget ? 0 : 1);
    write_pod<uint64_t>(f, dataset_hash);
    for (const std::vector<float> & layer : c.per_layer) {
        f.write(reinterpret_cast<const char *>(layer.data()),
                static_cast<std::streamsize>(layer.size() * sizeof(float)));
    }
    if (!f) throw input_error("write failed: " + path);
}

LoadedCoeffs load_coeffs(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw input_error("cannot open coefficient cache: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (static_cast<size_t>(f.gcount()) != sizeof(magic) ||
        std::memcmp(magic, kCoeffMagic, sizeof(magic)) != 0) {
        throw input_error("not a coefficient cache (bad magic): " + path);
    }
    LoadedCoeffs out;
    const auto layers = read_pod<uint32_t>(f, path);
    const auto m = read_pod<uint32_t>(f, path);
    out.coeffs.token_count = read_pod<uint64_t>(f, path);
    out.coeffs.source = read_pod<uint8_t>(f, path) == 0 ? CoeffSource::forget : CoeffSource::retain;
    out.dataset_hash = read_pod<uint64_t>(f, path);
    out.coeffs.per_layer.assign(layers, std::vector<float>(m));
    for (uint32_t l = 0; l < layers; l++) {
        f.read(reinterpret_cast<char *>(out.coeffs.per_layer[l].data()),
               static_cast<std::streamsize>(m * sizeof(float)));
        if (static_cast<size_t>(f.gcount()) != m * sizeof(float)) {
            throw input_error("corrupt coefficient cache (truncated payload): " + path);
        }
    }
    return out;
}

}  // namespace kvw
