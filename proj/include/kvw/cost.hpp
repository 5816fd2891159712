#pragma once

#include <cstdint>
#include <string>

#include "kvw/config.hpp"

namespace kvw {

// Unlearning method classes with analytic cost formulas. ga/gd/kl/npo are
// the LoRA-based variants (rank taken from CostParams); mmu and
// oracle_retrain train the full model; full_ft is the plain full-model
// fine-tuning step used as the comparison anchor.
enum class CostMethod { kvw, ga, gd, kl, npo, mmu, oracle_retrain, full_ft };

CostMethod  cost_method_from_string(const std::string & s);
std::string to_string(CostMethod m);

struct CostParams {
    ModelConfig config;
    int seq_len = 16;     // tokens per example
    int n_forget = 0;     // |D_f|, examples
    int n_retain = 0;     // |D_r|, examples
    int batch_size = 1;
    int epochs = 1;
    int lora_rank = 8;    // valid low-rank regime: 1 <= r <= d_model / 8
    int start_layer = 0;  // KVW edit range
    int end_layer = 0;

    void validate() const;
};

struct CostReport {
    CostMethod method = CostMethod::kvw;

    // one optimization/editing step over batch_size examples; teacher and
    // saliency passes that run once per example are amortized into totals
    uint64_t batch_forward_flops = 0;
    uint64_t batch_backward_flops = 0;
    uint64_t batch_edit_flops = 0;
    uint64_t batch_total_flops = 0;

    // whole-run totals over the datasets and epochs
    uint64_t total_forward_flops = 0;
    uint64_t total_backward_flops = 0;
    uint64_t total_edit_flops = 0;
    uint64_t total_flops = 0;

    // peak-resident f32 words
    uint64_t weight_words = 0;
    uint64_t activation_words = 0;
    uint64_t gradient_words = 0;
    uint64_t optimizer_words = 0;
    uint64_t extra_words = 0;  // adapters, reference copies, saliency masks, coefficient state
    uint64_t peak_words = 0;

    std::string to_json() const;
};

// Matmul MACs for one forward pass over a sequence. Matches the engine's
// instrumented counter (kvw::macs) with exact integer equality.
uint64_t forward_macs(const ModelConfig & config, int seq_len);

// Forward FLOPs = 2 * forward_macs.
uint64_t forward_flops(const ModelConfig & config, int seq_len);

// Symbolic parameter count of the architecture (matches
// ModelWeights::param_count for matching config).
uint64_t param_words(const ModelConfig & config);

CostReport flop_account(const CostParams & params, CostMethod method);

}  // namespace kvw
