#include "kvw/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "kvw/errors.hpp"

namespace kvw {

using nlohmann::json;

SelectionOutcome select_under_constraint(const std::vector<GridPoint> & grid,
                                         const std::vector<GridScore> & scores,
                                         double vanilla_retain, double retain_floor) {
    if (grid.empty()) throw input_error("selection grid is empty");
    if (grid.size() != scores.size()) throw input_error("grid/score size mismatch");
    if (vanilla_retain <= 0.0) throw input_error("vanilla retain score must be positive");
    if (retain_floor <= 0.0 || retain_floor > 1.0) {
        throw input_error("retain_floor must lie in (0, 1]");
    }

    const double cutoff = retain_floor * vanilla_retain;
    SelectionOutcome out;
    for (size_t i = 0; i < grid.size(); i++) {
        if (scores[i].retain_score < cutoff) continue;  // red cell: violates the constraint
        const bool better =
            !out.feasible || scores[i].forget_score < out.score.forget_score ||
            (scores[i].forget_score == out.score.forget_score &&
             scores[i].retain_score > out.score.retain_score);
        if (better) {
            out.feasible = true;
            out.index = i;
            out.config = grid[i];
            out.score = scores[i];
        }
    }
    return out;
}

KnowledgeCoefficients precompute_retain(const SynthBuild & suite, bool ans_only, CoeffMode mode) {
    return accumulate(suite.retain_data, suite.weights, ans_only, mode, CoeffSource::retain);
}

PipelineScores run_kvw_pipeline(const SynthBuild & suite, const KvwConfig & cfg,
                                const KnowledgeCoefficients * retain_cache) {
    ModelWeights edited = suite.weights;  // private copy per run

    KnowledgeCoefficients local;
    const KnowledgeCoefficients * retain = nullptr;
    if (cfg.use_retain) {
        if (retain_cache != nullptr) {
            retain = retain_cache;
        } else {
            local = precompute_retain(suite, cfg.ans_only, cfg.coeff_mode);
            retain = &local;
        }
    }
    kvw_unlearn(edited, suite.forget_data, retain, cfg);

    PipelineScores s;
    s.forget_hits = evaluate_recall(edited, suite.forget_facts);
    s.retain_hits = evaluate_recall(edited, suite.retain_facts);
    s.forget_acc = s.forget_hits.accuracy;
    s.retain_acc = s.retain_hits.accuracy;
    return s;
}

FoldSplit fold_split(size_t n_forget, size_t n_retain, int fold) {
    if (fold != 1 && fold != 2) throw input_error("fold must be 1 or 2");
    FoldSplit s;
    for (size_t i = 0; i < n_forget; i++) {
        if ((i % 2 == 0) == (fold == 1)) s.forget_idx.push_back(i);
    }
    for (size_t i = 0; i < n_retain; i++) {
        if ((i % 2 == 0) == (fold == 1)) s.retain_idx.push_back(i);
    }
    return s;
}

static double subset_accuracy(const RecallResult & r, const std::vector<size_t> & idx) {
    if (idx.empty()) return 1.0;
    size_t hits = 0;
    for (size_t i : idx) hits += r.hits[i] != 0;
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

void two_fold_select(TwoFoldReport & report, double retain_floor) {
    report.fold1_selected = select_under_constraint(report.grid, report.test1_scores,
                                                    report.vanilla_test1.retain_score, retain_floor);
    report.fold2_selected = select_under_constraint(report.grid, report.test2_scores,
                                                    report.vanilla_test2.retain_score, retain_floor);
    report.fold1_heldout =
        report.fold1_selected.feasible ? report.test2_scores[report.fold1_selected.index] : GridScore{};
    report.fold2_heldout =
        report.fold2_selected.feasible ? report.test1_scores[report.fold2_selected.index] : GridScore{};
}

TwoFoldReport two_fold_protocol(const SynthBuild & suite, const std::vector<GridPoint> & grid,
                                const ProtocolConfig & protocol) {
    if (grid.empty()) throw input_error("two-fold protocol requires a nonempty grid");
    const FoldSplit t1 = fold_split(suite.forget_facts.size(), suite.retain_facts.size(), 1);
    const FoldSplit t2 = fold_split(suite.forget_facts.size(), suite.retain_facts.size(), 2);
    if (t1.forget_idx.empty() || t2.forget_idx.empty() || t1.retain_idx.empty() ||
        t2.retain_idx.empty()) {
        throw input_error("degenerate fold split: need at least two forget and two retain facts");
    }

    TwoFoldReport report;
    report.grid = grid;

    const RecallResult vf = evaluate_recall(suite.weights, suite.forget_facts);
    const RecallResult vr = evaluate_recall(suite.weights, suite.retain_facts);
    report.vanilla_test1 = {subset_accuracy(vf, t1.forget_idx), subset_accuracy(vr, t1.retain_idx)};
    report.vanilla_test2 = {subset_accuracy(vf, t2.forget_idx), subset_accuracy(vr, t2.retain_idx)};

    // retain caches per extraction-flag combination actually present
    KnowledgeCoefficients cache_ans = precompute_retain(suite, true);
    KnowledgeCoefficients cache_all;
    bool have_all = false;

    for (const GridPoint & g : grid) {
        KvwConfig cfg;
        cfg.gamma = g.gamma;
        cfg.start_layer = g.start_layer;
        cfg.end_layer = g.end_layer;
        cfg.ans_only = g.ans_only;
        cfg.use_retain = g.use_retain;

        const KnowledgeCoefficients * cache = nullptr;
        if (g.use_retain) {
            if (g.ans_only) {
                cache = &cache_ans;
            } else {
                if (!have_all) {
                    cache_all = precompute_retain(suite, false);
                    have_all = true;
                }
                cache = &cache_all;
            }
        }
        PipelineScores s = run_kvw_pipeline(suite, cfg, cache);
        report.test1_scores.push_back({subset_accuracy(s.forget_hits, t1.forget_idx),
                                       subset_accuracy(s.retain_hits, t1.retain_idx)});
        report.test2_scores.push_back({subset_accuracy(s.forget_hits, t2.forget_idx),
                                       subset_accuracy(s.retain_hits, t2.retain_idx)});
    }

    two_fold_select(report, protocol.retain_floor);
    return report;
}

GammaSweepResult gamma_sweep(const SynthBuild & suite, const KvwConfig & base,
                             const std::vector<double> & gammas, double retain_floor) {
    if (gammas.empty()) throw input_error("gamma list is empty");
    for (size_t i = 1; i < gammas.size(); i++) {
        if (gammas[i] < gammas[i - 1]) throw input_error("gamma list must be sorted ascending");
    }

    GammaSweepResult out;
    out.retain_floor = retain_floor;
    out.vanilla_forget = evaluate_recall(suite.weights, suite.forget_facts).accuracy;
    out.vanilla_retain = evaluate_recall(suite.weights, suite.retain_facts).accuracy;
    const double cutoff = retain_floor * out.vanilla_retain;

    KnowledgeCoefficients cache = precompute_retain(suite, base.ans_only, base.coeff_mode);

    for (double g : gammas) {
        KvwConfig cfg = base;
        cfg.gamma = g;
        PipelineScores s = run_kvw_pipeline(suite, cfg, base.use_retain ? &cache : nullptr);
        GammaPoint pt;
        pt.gamma = g;
        pt.forget_acc = s.forget_acc;
        pt.retain_acc = s.retain_acc;
        pt.feasible = pt.forget_acc == 0.0 && pt.retain_acc >= cutoff;
        out.points.push_back(pt);
    }

    // largest contiguous feasible run
    size_t best_b = 0, best_e = 0, run_b = 0;
    bool in_run = false;
    for (size_t i = 0; i <= out.points.size(); i++) {
        const bool feasible = i < out.points.size() && out.points[i].feasible;
        if (feasible && !in_run) {
            run_b = i;
            in_run = true;
        } else if (!feasible && in_run) {
            if (i - run_b > best_e - best_b) {
                best_b = run_b;
                best_e = i;
            }
            in_run = false;
        }
    }
    out.feasible_begin = best_b;
    out.feasible_end = best_e;
    return out;
}

std::vector<std::pair<int, int>> layer_buckets(int num_layers, int bucket_count) {
    if (bucket_count < 1) throw config_error("bucket_count must be >= 1");
    if (num_layers < bucket_count) {
        throw config_error("cannot partition " + std::to_string(num_layers) + " layers into " +
                           std::to_string(bucket_count) + " buckets");
    }
    const int base = num_layers / bucket_count;
    const int rem = num_layers % bucket_count;
    std::vector<std::pair<int, int>> out;
    int begin = 0;
    for (int b = 0; b < bucket_count; b++) {
        const int size = base + (b < rem ? 1 : 0);  // remainder to the leading buckets
        out.emplace_back(begin, begin + size);
        begin += size;
    }
    return out;
}

LayerSweepResult layer_sweep(const SynthBuild & suite, const KvwConfig & base, int bucket_count) {
    const auto buckets = layer_buckets(suite.weights.config.num_layers, bucket_count);
    const auto & first = buckets.front();
    const auto & last = buckets.back();

    KnowledgeCoefficients cache = precompute_retain(suite, base.ans_only, base.coeff_mode);

    LayerSweepResult out;
    double f_min = 1.0, f_max = 0.0, r_min = 1.0, r_max = 0.0;
    for (int ls = first.first; ls < first.second; ls++) {
        for (int le = last.first; le < last.second; le++) {
            KvwConfig cfg = base;
            cfg.start_layer = ls;
            cfg.end_layer = le;
            PipelineScores s = run_kvw_pipeline(suite, cfg, base.use_retain ? &cache : nullptr);
            out.points.push_back({ls, le, s.forget_acc, s.retain_acc});
            f_min = std::min(f_min, s.forget_acc);
            f_max = std::max(f_max, s.forget_acc);
            r_min = std::min(r_min, s.retain_acc);
            r_max = std::max(r_max, s.retain_acc);
        }
    }
    out.forget_spread = f_max - f_min;
    out.retain_spread = r_max - r_min;
    return out;
}

std::vector<AblationRow> ablation_run(const SynthBuild & suite, const KvwConfig & base) {
    std::vector<AblationRow> rows;
    const std::pair<bool, bool> arms[] = {{false, true}, {true, false}, {true, true}};
    for (const auto & [ans_only, use_retain] : arms) {
        KvwConfig cfg = base;
        cfg.ans_only = ans_only;
        cfg.use_retain = use_retain;
        PipelineScores s = run_kvw_pipeline(suite, cfg, nullptr);
        rows.push_back({ans_only, use_retain, s.forget_acc, s.retain_acc});
    }
    return rows;
}

std::string TwoFoldReport::to_json() const {
    auto point_json = [](const GridPoint & g) {
        return json{{"gamma", g.gamma},
                    {"start_layer", g.start_layer},
                    {"end_layer", g.end_layer},
                    {"ans_only", g.ans_only},
                    {"use_retain", g.use_retain}};
    };
    auto score_json = [](const GridScore & s) {
        return json{{"forget", s.forget_score}, {"retain", s.retain_score}};
    };
    auto outcome_json = [&](const SelectionOutcome & o) {
        json j;
        j["feasible"] = o.feasible;
        if (o.feasible) {
            j["index"] = o.index;
            j["config"] = point_json(o.config);
            j["score"] = score_json(o.score);
        }
        return j;
    };

    json j;
    j["grid"] = json::array();
    for (size_t i = 0; i < grid.size(); i++) {
        json row = point_json(grid[i]);
        row["test1"] = score_json(test1_scores[i]);
        row["test2"] = score_json(test2_scores[i]);
        j["grid"].push_back(std::move(row));
    }
    j["vanilla"] = {{"test1", score_json(vanilla_test1)}, {"test2", score_json(vanilla_test2)}};
    j["fold1"] = {{"selected", outcome_json(fold1_selected)}, {"heldout", score_json(fold1_heldout)}};
    j["fold2"] = {{"selected", outcome_json(fold2_selected)}, {"heldout", score_json(fold2_heldout)}};
    return j.dump(2) + "\n";
}

// CSV numbers formatted with a fixed printf spec so output is byte-stable
// across runs
static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_gamma_sweep_csv(const GammaSweepResult & r, const std::string & path) {
    std::ofstream f(path);
    if (!f) throw input_error("cannot open for writing: " + path);
    f << "gamma,forget_acc,retain_acc,feasible\n";
    for (const GammaPoint & p : r.points) {
        f << num(p.gamma) << "," << num(p.forget_acc) << "," << num(p.retain_acc) << ","
          << (p.feasible ? 1 : 0) << "\n";
    }
}

void write_gamma_sweep_json(const GammaSweepResult & r, const std::string & path) {
    json j;
    j["vanilla_forget"] = r.vanilla_forget;
    j["vanilla_retain"] = r.vanilla_retain;
    j["retain_floor"] = r.retain_floor;
    j["points"] = json::array();
    for (const GammaPoint & p : r.points) {
        j["points"].push_back({{"gamma", p.gamma},
                               {"forget_acc", p.forget_acc},
                               {"retain_acc", p.retain_acc},
                               {"feasible", p.feasible}});
    }
    j["feasible_begin"] = r.feasible_begin;
    j["feasible_end"] = r.feasible_end;
    std::ofstream f(path);
    if (!f) throw input_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

void write_layer_sweep_csv(const LayerSweepResult & r, const std::string & path) {
    std::ofstream f(path);
    if (!f) throw input_error("cannot open for writing: " + path);
    f << "start_layer,end_layer,forget_acc,retain_acc\n";
    for (const LayerPoint & p : r.points) {
        f << p.start_layer << "," << p.end_layer << "," << num(p.forget_acc) << ","
          << num(p.retain_acc) << "\n";
    }
    f << "# forget_spread," << num(r.forget_spread) << "\n";
    f << "# retain_spread," << num(r.retain_spread) << "\n";
}

void write_ablation_csv(const std::vector<AblationRow> & rows, const std::string & path) {
    std::ofstream f(path);
    if (!f) throw input_error("cannot open for writing: " + path);
    f << "ans_only,use_retain,forget_acc,retain_acc\n";
    for (const AblationRow & r : rows) {
        f << (r.ans_only ? 1 : 0) << "," << (r.use_retain ? 1 : 0) << "," << num(r.forget_acc) << ","
          << num(r.retain_acc) << "\n";
    }
}

}  // namespace kvw
