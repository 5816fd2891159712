#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvw/config.hpp"
#include "kvw/linalg.hpp"

namespace kvw {

struct LayerWeights {
    std::vector<float> attn_norm;  // [d]
    Matrix wq, wk, wv, wo;         // [d x d]
    std::vector<float> ffn_norm;   // [d]
    Matrix ffn_key;                // [m x d], rows are FFN keys
    std::optional<Matrix> ffn_gate;  // [m x d], gated variant only
    Matrix ffn_value;              // [m x d], rows are knowledge vectors
};

struct ModelWeights {
    ModelConfig config;
    Matrix tok_embedding;            // [vocab x d]
    Matrix pos_embedding;            // [max_seq_len x d], learned absolute positions
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;   // [d]
    Matrix unembedding;              // [vocab x d]

    // shape consistency against config; throws config_error
    void validate_shapes() const;
    // NaN/Inf scan over every tensor; throws numeric_error naming the tensor
    void validate_finite() const;

    uint64_t param_count() const;
};

// Per-layer knowledge coefficients f(xK^T) (or the gated analogue) for every
// position, plus the normed FFN inputs, the layer FFN outputs and final
// logits. The coefficient row at position t weighted against ffn_value rows
// reproduces ffn_out row t.
struct ForwardTrace {
    std::vector<Matrix> coeffs;    // per layer [seq x m]
    std::vector<Matrix> ffn_in;    // per layer [seq x d], post-norm FFN input
    std::vector<Matrix> ffn_out;   // per layer [seq x d]
    Matrix logits;                 // [seq x vocab]
};

// One FFN evaluation. Returns the output y and the knowledge-coefficient
// vector weighting each ffn_value row:
//   plain: c = f(x K^T),  gated: c = f(x G^T) * (x K^T)   (element-wise)
//   y = sum_i c_i v_i
// x: [d], y: [d], coeffs: [m]. Throws numeric_error on non-finite output.
void ffn_forward(const float * x, const LayerWeights & layer, const ModelConfig & config,
                 float * y, float * coeffs, int layer_index = -1);

// Full causal forward pass over a token sequence (teacher forcing, no
// sampling). Deterministic: identical weights and tokens give bit-identical
// traces on the same build. Throws input_error on out-of-range ids or
// sequences longer than max_seq_len.
ForwardTrace forward_with_trace(const ModelWeights & w, std::span<const int32_t> tokens);

// argmax of the last-position logits, i.e. the greedy next token
int32_t greedy_next_token(const ModelWeights & w, std::span<const int32_t> tokens);

// Container: text header (config + named tensor directory with shapes and
// byte offsets + payload checksum) followed by raw little-endian f32 data.
// load(save(M)) is bit-identical to M.
void save_model(const ModelWeights & w, const std::string & path);
ModelWeights load_model(const std::string & path);

// Random small-scale weights, used by tests and fuzzing. Deterministic in
// (config, seed).
ModelWeights random_model(const ModelConfig & config, uint64_t seed, float scale = 0.1f);

}  // namespace kvw
