#include "kvw/config.hpp"

#include "kvw/errors.hpp"

namespace kvw {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
        case Activation::silu: return "silu";
    }
    return "?";
}

std::string to_string(FfnVariant v) {
    return v == FfnVariant::plain ? "plain" : "gated";
}

std::string to_string(NormKind n) {
    return n == NormKind::rmsnorm ? "rmsnorm" : "layernorm";
}

Activation activation_from_string(const std::string & s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    if (s == "silu") return Activation::silu;
    throw config_error("unknown activation tag: " + s);
}

FfnVariant ffn_variant_from_string(const std::string & s) {
    if (s == "plain") return FfnVariant::plain;
    if (s == "gated") return FfnVariant::gated;
    throw config_error("unknown ffn variant tag: " + s);
}

NormKind norm_from_string(const std::string & s) {
    if (s == "rmsnorm") return NormKind::rmsnorm;
    if (s == "layernorm") return NormKind::layernorm;
    throw config_error("unknown norm tag: " + s);
}

void ModelConfig::validate() const {
    if (num_layers < 1) throw config_error("num_layers must be >= 1");
    if (d_model < 1) throw config_error("d_model must be >= 1");
    if (ffn_dim < 1) throw config_error("ffn_dim must be >= 1");
    if (num_heads < 1) throw config_error("num_heads must be >= 1");
    if (vocab_size < 1) throw config_error("vocab_size must be >= 1");
    if (max_seq_len < 1) throw config_error("max_seq_len must be >= 1");
    if (d_model % num_heads != 0) {
        throw config_error("d_model (" + std::to_string(d_model) + ") not divisible by num_heads (" +
                           std::to_string(num_heads) + ")");
    }
}

}  // namespace kvw
