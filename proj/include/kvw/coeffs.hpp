#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvw/dataset.hpp"
#include "kvw/model.hpp"

namespace kvw {

enum class CoeffSource { forget, retain };

// How a raw (possibly negative, for silu/gelu) coefficient enters the mean.
// magnitude records |f(.)|; clamped records max(f(.), 0). magnitude is the
// default: it measures pathway usage regardless of sign and keeps the
// downstream log-ratio well defined.
enum class CoeffMode { magnitude, clamped };

CoeffMode   coeff_mode_from_string(const std::string & s);
std::string to_string(CoeffMode m);

// Per-layer mean coefficient vectors, pooled over every selected
// (example, position) pair with equal weight.
struct KnowledgeCoefficients {
    std::vector<std::vector<float>> per_layer;  // [num_layers][m], nonnegative
    uint64_t    token_count = 0;                // contributing positions
    CoeffSource source = CoeffSource::forget;

    size_t layer_count() const { return per_layer.size(); }
    size_t width() const { return per_layer.empty() ? 0 : per_layer[0].size(); }

    // dimension check against a target model; throws config_error
    void check_compatible(const ModelConfig & config) const;
};

// Streaming accumulator so datasets can be folded in example by example and
// partial sums merged associatively.
struct CoeffAccumulator {
    std::vector<std::vector<double>> sums;
    uint64_t count = 0;

    void init(size_t layers, size_t m);
    void add_example(const TokenExample & ex, const ModelWeights & weights, bool ans_only,
                     CoeffMode mode);
    void merge(const CoeffAccumulator & other);
    KnowledgeCoefficients finish(CoeffSource source) const;
};

// Mean coefficients over one example. ans_only=true restricts to answer
// positions (throws input_error when the mask selects nothing);
// ans_only=false pools every position.
KnowledgeCoefficients extract_coefficients(const TokenExample & ex, const ModelWeights & weights,
                                           bool ans_only, CoeffMode mode = CoeffMode::magnitude,
                                           CoeffSource source = CoeffSource::forget);

// Pooled mean over all selected positions of all examples; equals
// extract_coefficients on the concatenation of the selected positions.
// Throws input_error on an empty dataset.
KnowledgeCoefficients accumulate(const Dataset & examples, const ModelWeights & weights,
                                 bool ans_only, CoeffMode mode = CoeffMode::magnitude,
                                 CoeffSource source = CoeffSource::retain);

// Binary cache: fixed header (magic, layer count, m, token count, source,
// dataset hash) + per-layer raw little-endian f32. Lossless round trip.
void save_coeffs(const KnowledgeCoefficients & c, const std::string & path,
                 uint64_t dataset_hash = 0);

struct LoadedCoeffs {
    KnowledgeCoefficients coeffs;
    uint64_t dataset_hash = 0;
};
LoadedCoeffs load_coeffs(const std::string & path);

}  // namespace kvw
