// Analytic FLOP and memory accounting.
//
// Conventions: forward cost counts matmul MACs x2. Backpropagation through
// trained parameters costs 2x the forward of the trained subgraph; training
// a frozen-base LoRA model still pays one forward-equivalent pass for
// activation gradients through the base. Teacher/reference forwards (kl,
// npo) and saliency passes (mmu) run once per example against frozen
// weights, so they are charged to run totals and amortized out of the
// steady-state per-batch figure.

#include "kvw/cost.hpp"

#include <json.hpp>

#include "kvw/errors.hpp"

namespace kvw {

using nlohmann::json;

CostMethod cost_method_from_string(const std::string & s) {
    if (s == "kvw") return CostMethod::kvw;
    if (s == "ga") return CostMethod::ga;
    if (s == "gd") return CostMethod::gd;
    if (s == "kl") return CostMethod::kl;
    if (s == "npo") return CostMethod::npo;
    if (s == "mmu") return CostMethod::mmu;
    if (s == "oracle_retrain") return CostMethod::oracle_retrain;
    if (s == "full_ft") return CostMethod::full_ft;
    throw input_error("unknown cost method: " + s);
}

std::string to_string(CostMethod m) {
    switch (m) {
        case CostMethod::kvw: return "kvw";
        case CostMethod::ga: return "ga";
        case CostMethod::gd: return "gd";
        case CostMethod::kl: return "kl";
        case CostMethod::npo: return "npo";
        case CostMethod::mmu: return "mmu";
        case CostMethod::oracle_retrain: return "oracle_retrain";
        case CostMethod::full_ft: return "full_ft";
    }
    return "?";
}

void CostParams::validate() const {
    config.validate();
    if (seq_len < 1 || seq_len > config.max_seq_len) throw input_error("seq_len out of range");
    if (n_forget < 0 || n_retain < 0) throw input_error("dataset sizes must be nonnegative");
    if (batch_size < 1) throw input_error("batch_size must be >= 1");
    if (epochs < 1) throw input_error("epochs must be >= 1");
    if (lora_rank < 1) throw input_error("lora_rank must be >= 1");
    if (start_layer < 0 || end_layer < start_layer || end_layer >= config.num_layers) {
        throw input_error("edit layer range invalid");
    }
}

uint64_t forward_macs(const ModelConfig & config, int seq_len) {
    const uint64_t L = static_cast<uint64_t>(config.num_layers);
    const uint64_t d = static_cast<uint64_t>(config.d_model);
    const uint64_t m = static_cast<uint64_t>(config.ffn_dim);
    const uint64_t v = static_cast<uint64_t>(config.vocab_size);
    const uint64_t s = static_cast<uint64_t>(seq_len);
    const uint64_t c_ffn = config.ffn_variant == FfnVariant::gated ? 3 : 2;

    const uint64_t attn_proj = 4 * s * d * d;
    // causal scores + weighted value sum: position t touches t+1 keys/values
    const uint64_t attn_mix = d * s * (s + 1);
    const uint64_t ffn = c_ffn * s * m * d;
    const uint64_t logits = s * v * d;
    return L * (attn_proj + attn_mix + ffn) + logits;
}

uint64_t forward_flops(const ModelConfig & config, int seq_len) {
    return 2 * forward_macs(config, seq_len);
}

uint64_t param_words(const ModelConfig & config) {
    const uint64_t L = static_cast<uint64_t>(config.num_layers);
    const uint64_t d = static_cast<uint64_t>(config.d_model);
    const uint64_t m = static_cast<uint64_t>(config.ffn_dim);
    const uint64_t v = static_cast<uint64_t>(config.vocab_size);
    const uint64_t ms = static_cast<uint64_t>(config.max_seq_len);
    const uint64_t ffn_mats = config.ffn_variant == FfnVariant::gated ? 3 : 2;
    return v * d + ms * d + L * (2 * d + 4 * d * d + ffn_mats * m * d) + d + v * d;
}

namespace {

// LoRA adapters on the q/k/v/o projections: two rank-r matmuls each way
uint64_t adapter_fwd_flops(const ModelConfig & cfg, int seq_len, int rank) {
    const uint64_t L = static_cast<uint64_t>(cfg.num_layers);
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t s = static_cast<uint64_t>(seq_len);
    const uint64_t r = static_cast<uint64_t>(rank);
    return 2 * (L * 4 * 2 * s * d * r);
}

uint64_t adapter_param_words(const ModelConfig & cfg, int rank) {
    const uint64_t L = static_cast<uint64_t>(cfg.num_layers);
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t r = static_cast<uint64_t>(rank);
    return L * 4 * 2 * d * r;
}

// inference working set: current hidden/residual rows, one coefficient row,
// per-head score rows
uint64_t infer_act_words(const ModelConfig & cfg, int seq_len, int batch) {
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t m = static_cast<uint64_t>(cfg.ffn_dim);
    const uint64_t h = static_cast<uint64_t>(cfg.num_heads);
    const uint64_t s = static_cast<uint64_t>(seq_len);
    return static_cast<uint64_t>(batch) * (s * (2 * d + m) + h * s * s);
}

// training stores every layer's activations for the backward pass
uint64_t train_act_words(const ModelConfig & cfg, int seq_len, int batch) {
    const uint64_t L = static_cast<uint64_t>(cfg.num_layers);
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t m = static_cast<uint64_t>(cfg.ffn_dim);
    const uint64_t h = static_cast<uint64_t>(cfg.num_heads);
    const uint64_t s = static_cast<uint64_t>(seq_len);
    return static_cast<uint64_t>(batch) * L * (s * (4 * d + m) + h * s * s);
}

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

}  // namespace

CostReport flop_account(const CostParams & p, CostMethod method) {
    p.validate();
    const ModelConfig & cfg = p.config;

    const uint64_t fwd = forward_flops(cfg, p.seq_len);
    const uint64_t bs = static_cast<uint64_t>(p.batch_size);
    const uint64_t nf = static_cast<uint64_t>(p.n_forget);
    const uint64_t nr = static_cast<uint64_t>(p.n_retain);
    const uint64_t epochs = static_cast<uint64_t>(p.epochs);
    const uint64_t L = static_cast<uint64_t>(cfg.num_layers);
    const uint64_t d = static_cast<uint64_t>(cfg.d_model);
    const uint64_t m = static_cast<uint64_t>(cfg.ffn_dim);
    const uint64_t range = static_cast<uint64_t>(p.end_layer - p.start_layer + 1);
    const uint64_t P = param_words(cfg);
    const uint64_t A = adapter_fwd_flops(cfg, p.seq_len, p.lora_rank);
    const uint64_t adapter_p = adapter_param_words(cfg, p.lora_rank);

    CostReport r;
    r.method = method;
    r.weight_words = P;

    switch (method) {
        case CostMethod::kvw: {
            // per batch: forward only, then accessor + gate + row scaling
            const uint64_t extract = bs * L * m;            // magnitude averaging
            const uint64_t fka = 3 * L * m;                 // floor, ratio+log, clamp
            const uint64_t gates = 2 * range * m;           // exp + scale setup
            const uint64_t scale = range * m * d;           // value-row multiplies
            r.batch_forward_flops = bs * fwd;
            r.batch_backward_flops = 0;
            r.batch_edit_flops = extract + fka + gates + scale;

            const uint64_t n_batches = nf == 0 ? 0 : ceil_div(nf, bs);
            r.total_forward_flops = (nf + nr) * fwd;  // retain precompute + one forget pass
            r.total_backward_flops = 0;
            r.total_edit_flops = n_batches * (fka + gates + scale) + (nf + nr) * L * m;
            r.activation_words = infer_act_words(cfg, p.seq_len, p.batch_size);
            r.extra_words = 4 * L * m;  // C_r, C_f, accessor, gates
            break;
        }
        case CostMethod::ga:
        case CostMethod::gd:
        case CostMethod::kl:
        case CostMethod::npo: {
            // LoRA step: forward with adapters, one forward-equivalent pass
            // for activation gradients through the frozen base, adapter
            // gradients at 2x adapter forward
            r.batch_forward_flops = bs * (fwd + A);
            r.batch_backward_flops = bs * (fwd + 2 * A);
            r.batch_edit_flops = 0;

            uint64_t data = 0;      // examples touched per epoch
            uint64_t ref_once = 0;  // frozen-model forwards, once per example
            if (method == CostMethod::ga) {
                data = nf;
            } else if (method == CostMethod::gd) {
                data = nf + nr;
            } else if (method == CostMethod::kl) {
                data = nf + nr;
                ref_once = nr * fwd;  // cached original-model predictions on the retain set
            } else {
                data = nf;
                ref_once = nf * fwd;  // cached reference-model scores on the forget set
            }
            r.total_forward_flops = epochs * data * (fwd + A) + ref_once;
            r.total_backward_flops = epochs * data * (fwd + 2 * A);
            r.activation_words = train_act_words(cfg, p.seq_len, p.batch_size);
            r.gradient_words = adapter_p;
            r.optimizer_words = 2 * adapter_p;
            r.extra_words = adapter_p + (ref_once > 0 ? P : 0);  // adapters (+ frozen reference copy)
            break;
        }
        case CostMethod::full_ft:
        case CostMethod::oracle_retrain:
        case CostMethod::mmu: {
            r.batch_forward_flops = bs * fwd;
            r.batch_backward_flops = bs * 2 * fwd;
            r.batch_edit_flops = 0;

            const uint64_t data = method == CostMethod::oracle_retrain ? nr : nf + nr;
            // mmu runs one extra full forward+backward sweep over the data
            // to score parameter saliency
            const uint64_t saliency_passes = method == CostMethod::mmu ? nf + nr : 0;
            r.total_forward_flops = (epochs * data + saliency_passes) * fwd;
            r.total_backward_flops = (epochs * data + saliency_passes) * 2 * fwd;
            r.activation_words = train_act_words(cfg, p.seq_len, p.batch_size);
            r.gradient_words = P;
            r.optimizer_words = 2 * P;
            r.extra_words = method == CostMethod::mmu ? P : 0;  // saliency mask
            break;
        }
    }

    r.batch_total_flops = r.batch_forward_flops + r.batch_backward_flops + r.batch_edit_flops;
    r.total_flops = r.total_forward_flops + r.total_backward_flops + r.total_edit_flops;
    r.peak_words =
        r.weight_words + r.activation_words + r.gradient_words + r.optimizer_words + r.extra_words;
    return r;
}

std::string CostReport::to_json() const {
    json j;
    j["method"] = kvw::to_string(method);
    j["batch"] = {{"forward_flops", batch_forward_flops},
                  {"backward_flops", batch_backward_flops},
                  {"edit_flops", batch_edit_flops},
                  {"total_flops", batch_total_flops}};
    j["total"] = {{"forward_flops", total_forward_flops},
                  {"backward_flops", total_backward_flops},
                  {"edit_flops", total_edit_flops},
                  {"total_flops", total_flops}};
    j["memory_words"] = {{"weights", weight_words},
                         {"activations", activation_words},
                         {"gradients", gradient_words},
                         {"optimizer", optimizer_words},
                         {"extra", extra_words},
                         {"peak", peak_words}};
    return j.dump(2) + "\n";
}

}  // namespace kvw
