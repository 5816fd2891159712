#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kvw/errors.hpp"
#include "kvw/evalharness.hpp"
#include "kvw/rng.hpp"

using namespace kvw;

namespace {

GridPoint gp(double gamma) {
    GridPoint p;
    p.gamma = gamma;
    p.end_layer = 2;
    return p;
}

SynthParams small_params() {
    SynthParams p;
    p.n_forget = 4;
    p.n_retain = 8;
    p.config.num_layers = 3;
    p.config.d_model = 32;
    p.config.ffn_dim = 64;
    p.config.num_heads = 4;
    p.config.vocab_size = 128;
    p.config.max_seq_len = 8;
    p.seed = 0;
    return p;
}

}  // namespace

TEST_CASE("selection respects the retain constraint") {
    // vanilla retain 0.43, floor 0.95 -> cutoff 0.4085; the (0.00, 0.30)
    // candidate violates it, so (0.10, 0.48) wins despite worse forgetting
    std::vector<GridPoint> grid = {gp(0.1), gp(0.2)};
    std::vector<GridScore> scores = {{0.10, 0.48}, {0.00, 0.30}};
    SelectionOutcome out = select_under_constraint(grid, scores, 0.43, 0.95);
    REQUIRE(out.feasible);
    CHECK(out.index == 0);
    CHECK(out.score.forget_score == 0.10);
}

TEST_CASE("selection returns no-feasible when every candidate violates") {
    std::vector<GridPoint> grid = {gp(0.1), gp(0.2)};
    std::vector<GridScore> scores = {{0.00, 0.30}, {0.05, 0.35}};
    SelectionOutcome out = select_under_constraint(grid, scores, 0.43, 0.95);
    CHECK_FALSE(out.feasible);
}

TEST_CASE("a single feasible candidate is chosen regardless of forget score") {
    std::vector<GridPoint> grid = {gp(0.1), gp(0.2), gp(0.3)};
    std::vector<GridScore> scores = {{0.00, 0.10}, {0.90, 0.99}, {0.01, 0.20}};
    SelectionOutcome out = select_under_constraint(grid, scores, 1.0, 0.95);
    REQUIRE(out.feasible);
    CHECK(out.index == 1);
}

TEST_CASE("ties break toward higher retain, then grid order") {
    std::vector<GridPoint> grid = {gp(0.1), gp(0.2), gp(0.3)};
    std::vector<GridScore> scores = {{0.05, 0.96}, {0.05, 0.99}, {0.05, 0.99}};
    SelectionOutcome out = select_under_constraint(grid, scores, 1.0, 0.95);
    REQUIRE(out.feasible);
    CHECK(out.index == 1);
}

TEST_CASE("empty grid, bad vanilla and bad floor rejected") {
    CHECK_THROWS_AS(select_under_constraint({}, {}, 1.0, 0.95), input_error);
    std::vector<GridPoint> grid = {gp(0.1)};
    std::vector<GridScore> scores = {{0.0, 1.0}};
    CHECK_THROWS_AS(select_under_constraint(grid, scores, 0.0, 0.95), input_error);
    CHECK_THROWS_AS(select_under_constraint(grid, scores, 1.0, 0.0), input_error);
    CHECK_THROWS_AS(select_under_constraint(grid, scores, 1.0, 1.5), input_error);
}

TEST_CASE("precomputed cache, serialized cache and inline recomputation agree") {
    SynthBuild suite = build_synth(small_params());
    KvwConfig cfg;
    cfg.gamma = 1.5;
    cfg.start_layer = 0;
    cfg.end_layer = 2;
    cfg.batch_size = 2;

    KnowledgeCoefficients cache = precompute_retain(suite, cfg.ans_only);
    const std::string path =
        (std::filesystem::temp_directory_path() / "kvw_equiv.coeffs").string();
    save_coeffs(cache, path);
    KnowledgeCoefficients reloaded = load_coeffs(path).coeffs;
    std::filesystem::remove(path);
    CHECK(reloaded.per_layer == cache.per_layer);  // lossless round trip

    PipelineScores inline_scores = run_kvw_pipeline(suite, cfg, nullptr);
    PipelineScores cached_scores = run_kvw_pipeline(suite, cfg, &cache);
    PipelineScores reloaded_scores = run_kvw_pipeline(suite, cfg, &reloaded);
    CHECK(inline_scores.forget_acc == cached_scores.forget_acc);
    CHECK(inline_scores.retain_acc == cached_scores.retain_acc);
    CHECK(inline_scores.forget_hits.hits == cached_scores.forget_hits.hits);
    CHECK(cached_scores.forget_hits.hits == reloaded_scores.forget_hits.hits);
    CHECK(cached_scores.retain_hits.hits == reloaded_scores.retain_hits.hits);
}

TEST_CASE("selection fuzz: never returns a violator") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; trial++) {
        const size_t n = 1 + rng.below(12);
        std::vector<GridPoint> grid(n);
        std::vector<GridScore> scores(n);
        for (size_t i = 0; i < n; i++) {
            grid[i] = gp(rng.uniform());
            scores[i] = {rng.uniform(), rng.uniform()};
        }
        const double vanilla = 0.05 + rng.uniform();
        const double floor = 0.5 + 0.5 * rng.uniform();
        SelectionOutcome out = select_under_constraint(grid, scores, vanilla, floor);
        if (out.feasible) {
            CHECK(out.score.retain_score >= floor * vanilla);
            // nothing feasible has a strictly better forget score
            for (size_t i = 0; i < n; i++) {
                if (scores[i].retain_score >= floor * vanilla) {
                    CHECK(out.score.forget_score <= scores[i].forget_score);
                }
            }
        } else {
            for (size_t i = 0; i < n; i++) {
                CHECK(scores[i].retain_score < floor * vanilla);
            }
        }
    }
}

TEST_CASE("two-fold selection on a constructed asymmetric surface") {
    // config 0 is Test-1-optimal but Test-2-suboptimal; config 1 the reverse
    TwoFoldReport report;
    report.grid = {gp(0.5), gp(1.0)};
    report.vanilla_test1 = {1.0, 1.0};
    report.vanilla_test2 = {1.0, 1.0};
    report.test1_scores = {{0.00, 0.98}, {0.40, 0.99}};
    report.test2_scores = {{0.50, 0.97}, {0.10, 0.98}};
    two_fold_select(report, 0.95);

    REQUIRE(report.fold1_selected.feasible);
    REQUIRE(report.fold2_selected.feasible);
    CHECK(report.fold1_selected.index == 0);  // best on Test 1
    CHECK(report.fold2_selected.index == 1);  // best on Test 2
    // held-out scores expose the generalization gap
    CHECK(report.fold1_heldout.forget_score == 0.50);
    CHECK(report.fold2_heldout.forget_score == 0.40);
}

TEST_CASE("symmetric surfaces select the same config in both folds") {
    TwoFoldReport report;
    report.grid = {gp(0.5), gp(1.0)};
    report.vanilla_test1 = {1.0, 1.0};
    report.vanilla_test2 = {1.0, 1.0};
    report.test1_scores = {{0.20, 0.99}, {0.05, 0.97}};
    report.test2_scores = {{0.20, 0.99}, {0.05, 0.97}};
    two_fold_select(report, 0.95);
    CHECK(report.fold1_selected.index == report.fold2_selected.index);
}

TEST_CASE("single-config grid reports that config in both folds") {
    TwoFoldReport report;
    report.grid = {gp(1.0)};
    report.vanilla_test1 = {1.0, 1.0};
    report.vanilla_test2 = {1.0, 1.0};
    report.test1_scores = {{0.00, 1.0}};
    report.test2_scores = {{0.00, 1.0}};
    two_fold_select(report, 0.95);
    CHECK(report.fold1_selected.index == 0);
    CHECK(report.fold2_selected.index == 0);
}

TEST_CASE("fold splits are disjoint and exhaustive") {
    FoldSplit t1 = fold_split(5, 8, 1);
    FoldSplit t2 = fold_split(5, 8, 2);
    CHECK(t1.forget_idx == std::vector<size_t>{0, 2, 4});
    CHECK(t2.forget_idx == std::vector<size_t>{1, 3});
    CHECK(t1.retain_idx.size() + t2.retain_idx.size() == 8);
    CHECK_THROWS_AS(fold_split(5, 8, 3), input_error);
}

TEST_CASE("layer buckets: 32 layers in 8 buckets") {
    auto buckets = layer_buckets(32, 8);
    REQUIRE(buckets.size() == 8);
    CHECK(buckets.front() == std::pair<int, int>{0, 4});   // start candidates 0..3
    CHECK(buckets.back() == std::pair<int, int>{28, 32});  // end candidates 28..31
}

TEST_CASE("layer buckets: remainder goes to the leading buckets") {
    // 28 layers / 8 buckets: sizes 4,4,4,4,3,3,3,3
    auto buckets = layer_buckets(28, 8);
    REQUIRE(buckets.size() == 8);
    CHECK(buckets[0] == std::pair<int, int>{0, 4});
    CHECK(buckets[1] == std::pair<int, int>{4, 8});
    CHECK(buckets[3] == std::pair<int, int>{12, 16});
    CHECK(buckets[4] == std::pair<int, int>{16, 19});
    CHECK(buckets[7] == std::pair<int, int>{25, 28});

    // oracle: bucket sizes partition the layer count and are monotone
    for (int layers = 8; layers < 40; layers++) {
        auto bs = layer_buckets(layers, 8);
        int total = 0;
        int prev = bs[0].second - bs[0].first;
        for (auto [lo, hi] : bs) {
            total += hi - lo;
            CHECK(hi - lo <= prev);
            prev = hi - lo;
        }
        CHECK(total == layers);
    }
    CHECK_THROWS_AS(layer_buckets(4, 8), config_error);
}

TEST_CASE("gamma sweep demands a sorted list") {
    SynthBuild suite = build_synth(small_params());
    KvwConfig base;
    base.end_layer = 2;
    CHECK_THROWS_AS(gamma_sweep(suite, base, {1.0, 0.5}, 0.95), input_error);
    CHECK_THROWS_AS(gamma_sweep(suite, base, {}, 0.95), input_error);
}

TEST_CASE("gamma sweep: identity point, monotone forget, feasible region") {
    SynthBuild suite = build_synth(small_params());
    KvwConfig base;
    base.start_layer = 0;
    base.end_layer = 2;
    base.batch_size = 2;

    GammaSweepResult r =
        gamma_sweep(suite, base, {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0}, 0.95);
    CHECK(r.vanilla_forget == 1.0);
    CHECK(r.vanilla_retain == 1.0);
    CHECK(r.points[0].forget_acc == r.vanilla_forget);  // gamma 0 is the vanilla model
    CHECK(r.points[0].retain_acc == r.vanilla_retain);
    for (size_t i = 1; i < r.points.size(); i++) {
        CHECK(r.points[i].forget_acc <= r.points[i - 1].forget_acc);
    }
    CHECK(r.feasible_end > r.feasible_begin);  // a nonempty feasible region exists
    for (size_t i = r.feasible_begin; i < r.feasible_end; i++) {
        CHECK(r.points[i].forget_acc == 0.0);
        CHECK(r.points[i].retain_acc >= 0.95);
    }
}

TEST_CASE("ablation arms reproduce the qualitative directions") {
    SynthParams params;  // default desk-scale suite
    params.seed = 0;
    SynthBuild suite = build_synth(params);
    KvwConfig base;
    base.start_layer = 0;
    base.end_layer = suite.weights.config.num_layers - 1;
    base.gamma = 2.0;
    base.batch_size = 2;

    std::vector<AblationRow> rows = ablation_run(suite, base);
    REQUIRE(rows.size() == 3);
    const AblationRow & no_ans = rows[0];
    const AblationRow & no_retain = rows[1];
    const AblationRow & full = rows[2];
    CHECK(full.forget_acc == 0.0);
    CHECK(full.retain_acc >= 0.95);
    CHECK(no_ans.retain_acc < full.retain_acc);
    CHECK(no_retain.retain_acc < full.retain_acc);
}

TEST_CASE("report files are deterministic") {
    SynthBuild suite = build_synth(small_params());
    KvwConfig base;
    base.start_layer = 0;
    base.end_layer = 2;
    GammaSweepResult r = gamma_sweep(suite, base, {0.0, 1.0, 2.0}, 0.95);

    const auto dir = std::filesystem::temp_directory_path();
    const std::string p1 = (dir / "kvw_sweep_a.csv").string();
    const std::string p2 = (dir / "kvw_sweep_b.csv").string();
    write_gamma_sweep_csv(r, p1);
    write_gamma_sweep_csv(r, p2);
    std::ifstream f1(p1), f2(p2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(s1.find("gamma,forget_acc,retain_acc,feasible") == 0);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}
