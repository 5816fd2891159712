#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvw/coeffs.hpp"
#include "kvw/dataset.hpp"
#include "kvw/model.hpp"

namespace kvw {

// Per-layer forget-relevance scores: the element-wise clamped log-ratio of
// forget to retain mean coefficients. Always >= 0 and finite.
struct ForgetKnowledgeAccessor {
    std::vector<std::vector<double>> per_layer;  // [num_layers][m]
};

// Multiplicative scale per knowledge vector, exp(-gamma * A), in (0, 1].
struct GateVector {
    std::vector<std::vector<double>> per_layer;
};

struct KvwConfig {
    double gamma = 0.0;       // weakening strength
    int    start_layer = 0;   // inclusive
    int    end_layer = 0;     // inclusive
    double eps = 1e-8;        // floor for the ratio numerator and denominator
    bool   ans_only = true;
    bool   use_retain = true;
    int    batch_size = 2;
    CoeffMode coeff_mode = CoeffMode::magnitude;

    void validate(const ModelConfig & model) const;
};

// A_i = max(0, ln(max(c_f_i, eps) / max(c_r_i, eps))), element-wise per layer.
// Throws config_error on dimension mismatch.
ForgetKnowledgeAccessor compute_fka(const KnowledgeCoefficients & c_f,
                                    const KnowledgeCoefficients & c_r, double eps);

// g_i = exp(-gamma * A_i); identity exactly when gamma * A_i == 0.
GateVector gate(const ForgetKnowledgeAccessor & a, double gamma);

struct LayerEditStats {
    int      layer = 0;
    uint64_t rows_weakened = 0;  // rows with g < 1 - 1e-9
    double   min_gate = 1.0;
    double   mean_gate = 1.0;
};

struct EditSummary {
    std::vector<LayerEditStats> layers;  // one entry per layer in [l_s, l_e]
    uint64_t total_rows_weakened = 0;
};

// Scales ffn_value rows in place for layers l_s..l_e. Rows with g == 1 and
// all tensors outside the range are left bit-identical.
EditSummary apply_weakening(ModelWeights & weights, const GateVector & g, int start_layer,
                            int end_layer);

struct BatchSummary {
    int      batch_index = 0;
    size_t   example_count = 0;
    uint64_t positions = 0;      // answer positions pooled in this batch
    double   mean_fka = 0.0;     // over the edited layer range
    double   mean_gate = 1.0;
    std::vector<LayerEditStats> layers;
};

struct RunReport {
    KvwConfig cfg;
    std::vector<BatchSummary> batches;
    uint64_t order_hash = 0;   // dataset-order hash of the forget set
    size_t   batch_count = 0;
    size_t   example_count = 0;

    std::string to_json() const;  // deterministic serialization
};

// Algorithm main loop: process the forget set batch by batch in file order;
// each batch forwards on the weights as edited by all previous batches,
// pools coefficients at the selected positions, contrasts them against the
// frozen retain coefficients, and scales knowledge vectors on [l_s, l_e].
//
// use_retain=false substitutes the per-layer mean of the batch's own forget
// coefficients for C_r. gamma=0 or an empty forget set leaves the weights
// bit-identical. Batches are atomic: a failed extraction edits nothing.
RunReport kvw_unlearn(ModelWeights & weights, const Dataset & forget,
                      const KnowledgeCoefficients * retain_coeffs, const KvwConfig & cfg);

}  // namespace kvw
