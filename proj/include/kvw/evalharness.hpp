#pragma once

#include <string>
#include <vector>

#include "kvw/coeffs.hpp"
#include "kvw/synth.hpp"
#include "kvw/weaken.hpp"

namespace kvw {

// One hyperparameter candidate in a search grid.
struct GridPoint {
    double gamma = 0.0;
    int    start_layer = 0;
    int    end_layer = 0;
    bool   ans_only = true;
    bool   use_retain = true;
};

struct GridScore {
    double forget_score = 0.0;  // recall on the forget facts (lower = better)
    double retain_score = 0.0;  // recall on the retain facts
};

struct SelectionOutcome {
    bool      feasible = false;  // false: every candidate violates the floor
    size_t    index = 0;
    GridPoint config;
    GridScore score;
};

struct ProtocolConfig {
    double retain_floor = 0.95;  // fraction of the vanilla retain score to preserve
};

// Among candidates whose retain score is >= floor * vanilla_retain, pick the
// one with the lowest forget score; ties broken by higher retain score, then
// by grid order. Never returns a floor violator. Throws input_error on an
// empty grid or non-positive vanilla score.
SelectionOutcome select_under_constraint(const std::vector<GridPoint> & grid,
                                         const std::vector<GridScore> & scores,
                                         double vanilla_retain, double retain_floor);

// ---- pipeline running -------------------------------------------------

struct PipelineScores {
    double forget_acc = 0.0;
    double retain_acc = 0.0;
    RecallResult forget_hits;
    RecallResult retain_hits;
};

KnowledgeCoefficients precompute_retain(const SynthBuild & suite, bool ans_only,
                                        CoeffMode mode = CoeffMode::magnitude);

// Clones the suite model, runs the full unlearning loop, and scores recall
// on both fact sets. retain_cache, when given, must match cfg's extraction
// flags; pass nullptr to recompute from the suite's retain data.
PipelineScores run_kvw_pipeline(const SynthBuild & suite, const KvwConfig & cfg,
                                const KnowledgeCoefficients * retain_cache = nullptr);

// ---- two-fold protocol -------------------------------------------------

// Deterministic splits: even fact indices form Test 1, odd indices Test 2,
// applied to the forget and retain fact lists alike. Unlearning always uses
// the full forget dataset; only scoring is split.
struct FoldSplit {
    std::vector<size_t> forget_idx;
    std::vector<size_t> retain_idx;
};
FoldSplit fold_split(size_t n_forget, size_t n_retain, int fold);  // fold: 1 or 2

struct TwoFoldReport {
    std::vector<GridPoint> grid;
    std::vector<GridScore> test1_scores;  // per grid point
    std::vector<GridScore> test2_scores;
    GridScore vanilla_test1;
    GridScore vanilla_test2;
    SelectionOutcome fold1_selected;  // chosen on Test 1
    GridScore        fold1_heldout;   // its Test 2 score
    SelectionOutcome fold2_selected;  // chosen on Test 2
    GridScore        fold2_heldout;   // its Test 1 score

    std::string to_json() const;
};

// Pure selection half of the protocol, usable with precomputed score
// surfaces (fold 1 selects on test1 and reports the held-out test2 score;
// fold 2 reverses).
void two_fold_select(TwoFoldReport & report, double retain_floor);

TwoFoldReport two_fold_protocol(const SynthBuild & suite, const std::vector<GridPoint> & grid,
                                const ProtocolConfig & protocol);

// ---- sweeps -------------------------------------------------------------

struct GammaPoint {
    double gamma = 0.0;
    double forget_acc = 0.0;
    double retain_acc = 0.0;
    bool   feasible = false;  // forget_acc == 0 and retain above the floor
};

struct GammaSweepResult {
    std::vector<GammaPoint> points;
    double vanilla_forget = 0.0;
    double vanilla_retain = 0.0;
    double retain_floor = 0.95;
    // largest contiguous feasible run, [begin, end) over points; empty when begin == end
    size_t feasible_begin = 0;
    size_t feasible_end = 0;
};

// gammas must be sorted ascending (throws input_error otherwise).
GammaSweepResult gamma_sweep(const SynthBuild & suite, const KvwConfig & base,
                             const std::vector<double> & gammas, double retain_floor);

// Floor partition of num_layers into bucket_count buckets, remainder spread
// over the leading buckets. Returns [begin, end) bounds per bucket.
std::vector<std::pair<int, int>> layer_buckets(int num_layers, int bucket_count);

struct LayerPoint {
    int    start_layer = 0;
    int    end_layer = 0;
    double forget_acc = 0.0;
    double retain_acc = 0.0;
};

struct LayerSweepResult {
    std::vector<LayerPoint> points;  // cross product: first bucket x last bucket
    double forget_spread = 0.0;      // max - min over candidates
    double retain_spread = 0.0;
};

LayerSweepResult layer_sweep(const SynthBuild & suite, const KvwConfig & base,
                             int bucket_count = 8);

// ---- ablations ----------------------------------------------------------

struct AblationRow {
    bool   ans_only = true;
    bool   use_retain = true;
    double forget_acc = 0.0;
    double retain_acc = 0.0;
};

// Rows in table order: ans_only off, use_retain off, both on.
std::vector<AblationRow> ablation_run(const SynthBuild & suite, const KvwConfig & base);

// ---- report files ---------------------------------------------------------

void write_gamma_sweep_csv(const GammaSweepResult & r, const std::string & path);
void write_gamma_sweep_json(const GammaSweepResult & r, const std::string & path);
void write_layer_sweep_csv(const LayerSweepResult & r, const std::string & path);
void write_ablation_csv(const std::vector<AblationRow> & rows, const std::string & path);

}  // namespace kvw
