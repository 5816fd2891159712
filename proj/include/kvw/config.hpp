#pragma once

#include <cstdint>
#include <string>

namespace kvw {

enum class Activation { relu, gelu, silu };
enum class FfnVariant { plain, gated };
enum class NormKind { rmsnorm, layernorm };

std::string to_string(Activation a);
std::string to_string(FfnVariant v);
std::string to_string(NormKind n);

// throw config_error on unknown tag (serialized containers call these)
Activation activation_from_string(const std::string & s);
FfnVariant ffn_variant_from_string(const std::string & s);
NormKind   norm_from_string(const std::string & s);

struct ModelConfig {
    int num_layers  = 0;
    int d_model     = 0;
    int ffn_dim     = 0;
    int num_heads   = 0;
    int vocab_size  = 0;
    int max_seq_len = 0;
    Activation activation  = Activation::relu;
    FfnVariant ffn_variant = FfnVariant::plain;
    NormKind   norm        = NormKind::rmsnorm;

    // throws config_error on violated invariants
    void validate() const;

    bool operator==(const ModelConfig &) const = default;
};

}  // namespace kvw
