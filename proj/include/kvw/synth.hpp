#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvw/dataset.hpp"
#include "kvw/model.hpp"

namespace kvw {

// One planted subject-relation-answer fact stored at a designated FFN slot.
struct FactSpec {
    int32_t subject_token = 0;
    int32_t relation_token = 0;
    int32_t answer_token = 0;
    int     layer = 0;     // layer holding the key/value pair
    int     slot = 0;      // FFN row index
    float   strength = 1.0f;  // value-row gain
};

struct SynthParams {
    int      n_forget = 5;
    int      n_retain = 20;
    ModelConfig config;   // zero-initialized fields are filled with defaults
    uint64_t seed = 0;
    int      planted_layer = -1;  // -1: middle layer (num_layers / 2)

    // construction gains; defaults are tuned so that build-time verification
    // passes with margin on small models
    float key_gain = 4.0f;
    float value_gain = 4.0f;
    float noise_scale = 0.02f;       // background FFN rows
    float attn_value_scale = 0.25f;  // how strongly attention mixes the prefix
    float answer_weight = 1.0f;      // answer-state channel weight inside keys
    // calibrated firing level of the channel an overlap fact shares with its
    // source, measured on the source's answer state; controls how strongly
    // weakening pressure leaks from forget facts onto semantically
    // overlapping retain facts
    float target_overlap_fire = 0.8f;
    // calibrated firing level of the prompt-position channel a
    // shared-subject fact has in common with its source. Orthogonal to every
    // query and answer state, so it is invisible to answer-only extraction
    // and only surfaces when coefficients are pooled over all positions
    float target_prompt_fire = 12.0f;
    // weight of a direction shared by every key that fires uniformly at
    // answer positions: it cancels in the forget/retain ratio but exposes
    // all fact slots to the no-retain ablation arm
    float common_weight = 0.03f;
    // per-fact key gains are calibrated so every fact fires at this level on
    // its own query state
    float target_query_fire = 10.0f;
    // per-fact value strengths are boosted until the answer logit clears the
    // runner-up by this margin (0 disables the calibration pass)
    float target_margin = 2.0f;
    // fraction of a forget answer's embedding mixed into overlapping retain
    // answers; models semantic overlap between the two sets
    float answer_overlap = 0.45f;
    // build-time recall/separability verification (disable only for
    // construction diagnostics)
    bool verify = true;

    ModelConfig effective_config() const;
};

struct SynthBuild {
    ModelWeights weights;
    std::vector<FactSpec> forget_facts;
    std::vector<FactSpec> retain_facts;
    Dataset forget_data;
    Dataset retain_data;
    uint64_t seed = 0;
};

// Paths-on-disk form of a built suite.
struct SynthSuite {
    std::string model_path;
    std::string forget_dataset_path;
    std::string retain_dataset_path;
    std::vector<FactSpec> forget_facts;
    std::vector<FactSpec> retain_facts;
    uint64_t seed = 0;
};

// The teacher-forced dataset row for a fact: [subject, relation, answer]
// with the answer span covering the final position.
TokenExample fact_example(const FactSpec & fact);

// Query prompt for recall: [subject, relation].
std::vector<int32_t> fact_query(const FactSpec & fact);

// Installs key/value rows for the given facts into the weights. Keys are
// tuned to fire on the fact's own hidden states; values push the answer
// token through the unembedding. overlap_source / subject_source, when
// nonempty, map each fact index to the index of a fact whose answer
// representation / subject it shares (-1 for none); the shared components
// are kept in the key as separately weighted channels. Throws config_error
// on duplicate (layer, slot) pairs, capacity overflow, or answer/subject
// collisions.
void plant_facts(ModelWeights & weights, const std::vector<FactSpec> & facts,
                 const SynthParams & params, const std::vector<int> & overlap_source = {},
                 const std::vector<int> & subject_source = {});

// Builds the full suite in memory: background transformer + planted facts +
// paired datasets. Verifies 100% pre-edit recall on every fact and the
// forget/retain separability of the planted slots; throws config_error with
// the offending fact ids otherwise. Deterministic in (params, seed).
SynthBuild build_synth(const SynthParams & params);

// Builds and writes model + datasets + manifest under out_dir; returns the
// manifest description. Files: model.kvwm, forget.jsonl, retain.jsonl,
// manifest.json.
SynthSuite build_suite_files(const SynthParams & params, const std::string & out_dir);

SynthSuite load_suite(const std::string & manifest_path);

struct RecallResult {
    std::vector<uint8_t> hits;  // per fact
    double accuracy = 1.0;      // hits / total; 1.0 for an empty fact list
};

// A fact is a hit iff greedy decoding of its query yields its answer token
// at the answer position.
RecallResult evaluate_recall(const ModelWeights & weights, const std::vector<FactSpec> & facts);

}  // namespace kvw
