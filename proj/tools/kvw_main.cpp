// Command-line front end: builds synthetic suites, precomputes retain
// coefficients, runs the weakening loop, and drives the evaluation harness.
// Every subcommand is a pure function of its flags, input files, and seed;
// reruns produce byte-identical artifacts.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numeric error,
// 4 no feasible configuration.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kvw/coeffs.hpp"
#include "kvw/cost.hpp"
#include "kvw/dataset.hpp"
#include "kvw/errors.hpp"
#include "kvw/evalharness.hpp"
#include "kvw/model.hpp"
#include "kvw/synth.hpp"
#include "kvw/weaken.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitNoFeasible = 4;

json load_config_file(const std::string & path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw kvw::input_error("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception & e) {
        throw kvw::input_error("bad config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw kvw::input_error("config file must hold a JSON object");
    return j;
}

// config-file values fill in flags the user did not pass explicitly
template <typename T>
void reconcile(const CLI::App & sub, const std::string & flag, const json & cfg,
               const std::string & key, T & value) {
    if (sub.count(flag) == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

std::vector<double> parse_double_list(const std::string & csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

void write_text(const std::string & path, const std::string & text) {
    std::ofstream f(path);
    if (!f) throw kvw::input_error("cannot open for writing: " + path);
    f << text;
}

kvw::SynthBuild load_build_from_suite(const kvw::SynthSuite & suite) {
    kvw::SynthBuild b;
    b.weights = kvw::load_model(suite.model_path);
    b.forget_facts = suite.forget_facts;
    b.retain_facts = suite.retain_facts;
    b.forget_data = kvw::load_dataset(suite.forget_dataset_path);
    b.retain_data = kvw::load_dataset(suite.retain_dataset_path);
    b.seed = suite.seed;
    return b;
}

int cmd_build_synth(const CLI::App & sub, const json & cfg, kvw::SynthParams params,
                    std::string out_dir) {
    reconcile(sub, "--out", cfg, "out", out_dir);
    reconcile(sub, "--n-forget", cfg, "n_forget", params.n_forget);
    reconcile(sub, "--n-retain", cfg, "n_retain", params.n_retain);
    reconcile(sub, "--layers", cfg, "num_layers", params.config.num_layers);
    reconcile(sub, "--d-model", cfg, "d_model", params.config.d_model);
    reconcile(sub, "--ffn-dim", cfg, "ffn_dim", params.config.ffn_dim);
    reconcile(sub, "--heads", cfg, "num_heads", params.config.num_heads);
    reconcile(sub, "--vocab", cfg, "vocab_size", params.config.vocab_size);
    reconcile(sub, "--max-seq", cfg, "max_seq_len", params.config.max_seq_len);
    reconcile(sub, "--planted-layer", cfg, "planted_layer", params.planted_layer);
    reconcile(sub, "--seed", cfg, "seed", params.seed);

    kvw::build_suite_files(params, out_dir);
    std::cout << out_dir << "/manifest.json\n";
    return kExitOk;
}

int cmd_precompute_retain(const CLI::App & sub, const json & cfg, std::string model_path,
                          std::string dataset_path, std::string out_path, bool all_tokens,
                          std::string coeff_mode) {
    reconcile(sub, "--model", cfg, "model", model_path);
    reconcile(sub, "--dataset", cfg, "dataset", dataset_path);
    reconcile(sub, "--out", cfg, "out", out_path);
    reconcile(sub, "--all-tokens", cfg, "all_tokens", all_tokens);
    reconcile(sub, "--coeff-mode", cfg, "coeff_mode", coeff_mode);

    kvw::ModelWeights weights = kvw::load_model(model_path);
    kvw::Dataset data = kvw::load_dataset(dataset_path);
    kvw::KnowledgeCoefficients coeffs =
        kvw::accumulate(data, weights, !all_tokens, kvw::coeff_mode_from_string(coeff_mode),
                        kvw::CoeffSource::retain);
    kvw::save_coeffs(coeffs, out_path, kvw::dataset_hash(data));
    std::cout << out_path << "\n";
    return kExitOk;
}

int cmd_unlearn(const CLI::App & sub, const json & cfg, std::string model_path,
                std::string forget_path, std::string cache_path, std::string out_path,
                std::string report_path, kvw::KvwConfig kcfg, bool no_retain, bool all_tokens,
                std::string coeff_mode, uint64_t seed) {
    reconcile(sub, "--model", cfg, "model", model_path);
    reconcile(sub, "--forget", cfg, "forget", forget_path);
    reconcile(sub, "--retain-cache", cfg, "retain_cache", cache_path);
    reconcile(sub, "--out", cfg, "out", out_path);
    reconcile(sub, "--report", cfg, "report", report_path);
    reconcile(sub, "--gamma", cfg, "gamma", kcfg.gamma);
    reconcile(sub, "--start-layer", cfg, "start_layer", kcfg.start_layer);
    reconcile(sub, "--end-layer", cfg, "end_layer", kcfg.end_layer);
    reconcile(sub, "--eps", cfg, "eps", kcfg.eps);
    reconcile(sub, "--batch-size", cfg, "batch_size", kcfg.batch_size);
    reconcile(sub, "--no-retain", cfg, "no_retain", no_retain);
    reconcile(sub, "--all-tokens", cfg, "all_tokens", all_tokens);
    reconcile(sub, "--coeff-mode", cfg, "coeff_mode", coeff_mode);
    reconcile(sub, "--seed", cfg, "seed", seed);

    kcfg.use_retain = !no_retain;
    kcfg.ans_only = !all_tokens;
    kcfg.coeff_mode = kvw::coeff_mode_from_string(coeff_mode);

    if (kcfg.use_retain && cache_path.empty()) {
        throw kvw::config_error("--retain-cache is required unless --no-retain is given explicitly");
    }

    kvw::ModelWeights weights = kvw::load_model(model_path);
    kvw::Dataset forget = kvw::load_dataset(forget_path);

    kvw::KnowledgeCoefficients retain;
    const kvw::KnowledgeCoefficients * retain_ptr = nullptr;
    if (kcfg.use_retain) {
        retain = kvw::load_coeffs(cache_path).coeffs;
        retain_ptr = &retain;
    }

    kvw::RunReport report = kvw::kvw_unlearn(weights, forget, retain_ptr, kcfg);
    kvw::save_model(weights, out_path);

    if (report_path.empty()) report_path = out_path + ".report.json";
    json j = json::parse(report.to_json());
    j["seed"] = seed;
    j["model_in"] = model_path;
    j["model_out"] = out_path;
    write_text(report_path, j.dump(2) + "\n");
    std::cout << out_path << "\n";
    return kExitOk;
}

int cmd_eval(const CLI::App & sub, const json & cfg, std::string manifest_path,
             std::string model_override, std::string out_path) {
    reconcile(sub, "--suite", cfg, "suite", manifest_path);
    reconcile(sub, "--model", cfg, "model", model_override);
    reconcile(sub, "--out", cfg, "out", out_path);

    kvw::SynthSuite suite = kvw::load_suite(manifest_path);
    const std::string model_path = model_override.empty() ? suite.model_path : model_override;
    kvw::ModelWeights weights = kvw::load_model(model_path);

    kvw::RecallResult forget = kvw::evaluate_recall(weights, suite.forget_facts);
    kvw::RecallResult retain = kvw::evaluate_recall(weights, suite.retain_facts);

    json j;
    j["model"] = model_path;
    j["suite_seed"] = suite.seed;
    j["forget_recall"] = forget.accuracy;
    j["retain_recall"] = retain.accuracy;
    j["forget_hits"] = forget.hits;
    j["retain_hits"] = retain.hits;
    const std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text;
    return kExitOk;
}

int cmd_sweep(const CLI::App & sub, const json & cfg, std::string kind, std::string manifest_path,
              std::string out_dir, std::string gamma_csv, kvw::KvwConfig base, double retain_floor,
              int buckets) {
    reconcile(sub, "--kind", cfg, "kind", kind);
    reconcile(sub, "--suite", cfg, "suite", manifest_path);
    reconcile(sub, "--out-dir", cfg, "out_dir", out_dir);
    reconcile(sub, "--gamma-list", cfg, "gamma_list", gamma_csv);
    reconcile(sub, "--gamma", cfg, "gamma", base.gamma);
    reconcile(sub, "--start-layer", cfg, "start_layer", base.start_layer);
    reconcile(sub, "--end-layer", cfg, "end_layer", base.end_layer);
    reconcile(sub, "--eps", cfg, "eps", base.eps);
    reconcile(sub, "--batch-size", cfg, "batch_size", base.batch_size);
    reconcile(sub, "--retain-floor", cfg, "retain_floor", retain_floor);
    reconcile(sub, "--buckets", cfg, "buckets", buckets);

    // environment override for the report directory
    if (const char * env = std::getenv("KVW_REPORT_DIR"); env != nullptr && *env != '\0') {
        out_dir = env;
    }
    fs::create_directories(out_dir);

    kvw::SynthBuild suite = load_build_from_suite(kvw::load_suite(manifest_path));
    if (sub.count("--end-layer") == 0 && !cfg.contains("end_layer")) {
        base.end_layer = suite.weights.config.num_layers - 1;
    }

    // seed provenance for every report artifact
    auto stamp_json = [&](const std::string & path) {
        std::ifstream in(path);
        json j;
        in >> j;
        in.close();
        j["suite_seed"] = suite.seed;
        write_text(path, j.dump(2) + "\n");
    };
    auto stamp_csv = [&](const std::string & path) {
        std::ofstream f(path, std::ios::app);
        f << "# suite_seed," << suite.seed << "\n";
    };

    if (kind == "gamma") {
        std::vector<double> gammas = parse_double_list(gamma_csv);
        kvw::GammaSweepResult r = kvw::gamma_sweep(suite, base, gammas, retain_floor);
        kvw::write_gamma_sweep_csv(r, out_dir + "/gamma_sweep.csv");
        stamp_csv(out_dir + "/gamma_sweep.csv");
        kvw::write_gamma_sweep_json(r, out_dir + "/gamma_sweep.json");
        stamp_json(out_dir + "/gamma_sweep.json");
        std::cout << out_dir << "/gamma_sweep.csv\n";
        return kExitOk;
    }
    if (kind == "layer") {
        kvw::LayerSweepResult r = kvw::layer_sweep(suite, base, buckets);
        kvw::write_layer_sweep_csv(r, out_dir + "/layer_sweep.csv");
        stamp_csv(out_dir + "/layer_sweep.csv");
        std::cout << out_dir << "/layer_sweep.csv\n";
        return kExitOk;
    }
    if (kind == "ablation") {
        std::vector<kvw::AblationRow> rows = kvw::ablation_run(suite, base);
        kvw::write_ablation_csv(rows, out_dir + "/ablation.csv");
        stamp_csv(out_dir + "/ablation.csv");
        std::cout << out_dir << "/ablation.csv\n";
        return kExitOk;
    }
    if (kind == "two-fold") {
        std::vector<kvw::GridPoint> grid;
        if (cfg.contains("grid")) {
            for (const json & g : cfg.at("grid")) {
                kvw::GridPoint p;
                p.gamma = g.value("gamma", 0.0);
                p.start_layer = g.value("start_layer", base.start_layer);
                p.end_layer = g.value("end_layer", base.end_layer);
                p.ans_only = g.value("ans_only", true);
                p.use_retain = g.value("use_retain", true);
                grid.push_back(p);
            }
        } else {
            for (double g : parse_double_list(gamma_csv)) {
                grid.push_back({g, base.start_layer, base.end_layer, true, true});
            }
        }
        kvw::ProtocolConfig protocol;
        protocol.retain_floor = retain_floor;
        kvw::TwoFoldReport r = kvw::two_fold_protocol(suite, grid, protocol);
        write_text(out_dir + "/two_fold.json", r.to_json());
        stamp_json(out_dir + "/two_fold.json");
        std::cout << out_dir << "/two_fold.json\n";
        if (!r.fold1_selected.feasible || !r.fold2_selected.feasible) return kExitNoFeasible;
        return kExitOk;
    }
    throw kvw::input_error("unknown sweep kind: " + kind);
}

int cmd_report(const CLI::App & sub, const json & cfg, std::string dir, std::string out_path) {
    reconcile(sub, "--dir", cfg, "dir", dir);
    reconcile(sub, "--out", cfg, "out", out_path);

    std::vector<fs::path> files;
    for (const auto & entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".csv" || ext == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::ostringstream combined;
    for (const fs::path & p : files) {
        std::ifstream f(p);
        combined << "### " << p.filename().string() << "\n";
        combined << f.rdbuf();
        combined << "\n";
    }
    if (out_path.empty()) out_path = dir + "/combined_report.txt";
    write_text(out_path, combined.str());
    std::cout << out_path << "\n";
    return kExitOk;
}

int cmd_flops(const CLI::App & sub, const json & cfg, std::string method, kvw::CostParams params,
              std::string out_path) {
    reconcile(sub, "--method", cfg, "method", method);
    reconcile(sub, "--layers", cfg, "num_layers", params.config.num_layers);
    reconcile(sub, "--d-model", cfg, "d_model", params.config.d_model);
    reconcile(sub, "--ffn-dim", cfg, "ffn_dim", params.config.ffn_dim);
    reconcile(sub, "--heads", cfg, "num_heads", params.config.num_heads);
    reconcile(sub, "--vocab", cfg, "vocab_size", params.config.vocab_size);
    reconcile(sub, "--seq", cfg, "seq_len", params.seq_len);
    reconcile(sub, "--n-forget", cfg, "n_forget", params.n_forget);
    reconcile(sub, "--n-retain", cfg, "n_retain", params.n_retain);
    reconcile(sub, "--batch-size", cfg, "batch_size", params.batch_size);
    reconcile(sub, "--epochs", cfg, "epochs", params.epochs);
    reconcile(sub, "--rank", cfg, "lora_rank", params.lora_rank);
    reconcile(sub, "--start-layer", cfg, "start_layer", params.start_layer);
    reconcile(sub, "--end-layer", cfg, "end_layer", params.end_layer);
    reconcile(sub, "--out", cfg, "out", out_path);

    if (params.config.max_seq_len < params.seq_len) params.config.max_seq_len = params.seq_len;
    if (sub.count("--end-layer") == 0 && !cfg.contains("end_layer")) {
        params.end_layer = params.config.num_layers - 1;
    }

    kvw::CostReport r = kvw::flop_account(params, kvw::cost_method_from_string(method));
    const std::string text = r.to_json();
    if (!out_path.empty()) write_text(out_path, text);
    std::cout << text;
    return kExitOk;
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"forward-only unlearning on FFN key-value memories"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; explicit flags take precedence");

    // build-synth
    auto * sb = app.add_subcommand("build-synth", "construct a planted-fact model and datasets");
    kvw::SynthParams sp;
    std::string sb_out = "suite";
    sb->add_option("--out", sb_out, "output directory");
    sb->add_option("--n-forget", sp.n_forget, "forget fact count");
    sb->add_option("--n-retain", sp.n_retain, "retain fact count");
    sb->add_option("--layers", sp.config.num_layers, "transformer layers");
    sb->add_option("--d-model", sp.config.d_model, "model width");
    sb->add_option("--ffn-dim", sp.config.ffn_dim, "FFN rows per layer");
    sb->add_option("--heads", sp.config.num_heads, "attention heads");
    sb->add_option("--vocab", sp.config.vocab_size, "vocabulary size");
    sb->add_option("--max-seq", sp.config.max_seq_len, "maximum sequence length");
    sb->add_option("--planted-layer", sp.planted_layer, "layer holding the facts (-1: middle)");
    sb->add_option("--seed", sp.seed, "construction seed");

    // precompute-retain
    auto * pr = app.add_subcommand("precompute-retain", "average retain coefficients into a cache");
    std::string pr_model, pr_dataset, pr_out = "retain.coeffs";
    bool pr_all_tokens = false;
    std::string pr_mode = "magnitude";
    pr->add_option("--model", pr_model, "model container")->required();
    pr->add_option("--dataset", pr_dataset, "retain JSONL")->required();
    pr->add_option("--out", pr_out, "cache path");
    pr->add_flag("--all-tokens", pr_all_tokens, "pool every position, not only answer tokens");
    pr->add_option("--coeff-mode", pr_mode, "magnitude|clamped");

    // unlearn
    auto * ul = app.add_subcommand("unlearn", "run progressive knowledge vector weakening");
    std::string ul_model, ul_forget, ul_cache, ul_out = "unlearned.kvwm", ul_report;
    kvw::KvwConfig ul_cfg;
    bool ul_no_retain = false, ul_all_tokens = false;
    std::string ul_mode = "magnitude";
    uint64_t ul_seed = 0;
    ul->add_option("--model", ul_model, "model container")->required();
    ul->add_option("--forget", ul_forget, "forget JSONL")->required();
    ul->add_option("--retain-cache", ul_cache, "precomputed retain coefficients");
    ul->add_option("--gamma", ul_cfg.gamma, "weakening strength");
    ul->add_option("--start-layer", ul_cfg.start_layer, "first edited layer");
    ul->add_option("--end-layer", ul_cfg.end_layer, "last edited layer");
    ul->add_option("--eps", ul_cfg.eps, "ratio floor");
    ul->add_option("--batch-size", ul_cfg.batch_size, "forget batch size");
    ul->add_option("--out", ul_out, "edited model path");
    ul->add_option("--report", ul_report, "run report path (default: <out>.report.json)");
    ul->add_flag("--no-retain", ul_no_retain, "ablation: contrast against the batch mean instead");
    ul->add_flag("--all-tokens", ul_all_tokens, "ablation: pool every position");
    ul->add_option("--coeff-mode", ul_mode, "magnitude|clamped");
    ul->add_option("--seed", ul_seed, "recorded in the run report");

    // eval
    auto * ev = app.add_subcommand("eval", "fact recall of a model against a suite");
    std::string ev_suite, ev_model, ev_out;
    ev->add_option("--suite", ev_suite, "suite manifest")->required();
    ev->add_option("--model", ev_model, "model to score (default: the suite's own)");
    ev->add_option("--out", ev_out, "JSON output path");

    // sweep
    auto * sw = app.add_subcommand("sweep", "gamma/layer/ablation/two-fold sweeps");
    std::string sw_kind = "gamma", sw_suite, sw_dir = "reports", sw_gammas = "0,0.01,0.03,0.1,0.3,1,2,3,5";
    kvw::KvwConfig sw_cfg;
    double sw_floor = 0.95;
    int sw_buckets = 8;
    sw->add_option("--kind", sw_kind, "gamma|layer|ablation|two-fold");
    sw->add_option("--suite", sw_suite, "suite manifest")->required();
    sw->add_option("--out-dir", sw_dir, "report directory (env KVW_REPORT_DIR overrides)");
    sw->add_option("--gamma-list", sw_gammas, "comma-separated gammas");
    sw->add_option("--gamma", sw_cfg.gamma, "fixed gamma for layer/ablation sweeps");
    sw->add_option("--start-layer", sw_cfg.start_layer, "first edited layer");
    sw->add_option("--end-layer", sw_cfg.end_layer, "last edited layer (default: last)");
    sw->add_option("--eps", sw_cfg.eps, "ratio floor");
    sw->add_option("--batch-size", sw_cfg.batch_size, "forget batch size");
    sw->add_option("--retain-floor", sw_floor, "retain constraint fraction");
    sw->add_option("--buckets", sw_buckets, "layer sweep bucket count");

    // report
    auto * rp = app.add_subcommand("report", "aggregate a sweep directory");
    std::string rp_dir, rp_out;
    rp->add_option("--dir", rp_dir, "sweep directory")->required();
    rp->add_option("--out", rp_out, "combined report path");

    // flops
    auto * fl = app.add_subcommand("flops", "analytic cost of an unlearning method");
    std::string fl_method = "kvw", fl_out;
    kvw::CostParams fl_params;
    fl_params.config.num_layers = 4;
    fl_params.config.d_model = 64;
    fl_params.config.ffn_dim = 256;
    fl_params.config.num_heads = 4;
    fl_params.config.vocab_size = 512;
    fl_params.config.max_seq_len = 64;
    fl->add_option("--method", fl_method, "kvw|ga|gd|kl|npo|mmu|oracle_retrain|full_ft");
    fl->add_option("--layers", fl_params.config.num_layers, "transformer layers");
    fl->add_option("--d-model", fl_params.config.d_model, "model width");
    fl->add_option("--ffn-dim", fl_params.config.ffn_dim, "FFN rows");
    fl->add_option("--heads", fl_params.config.num_heads, "attention heads");
    fl->add_option("--vocab", fl_params.config.vocab_size, "vocabulary size");
    fl->add_option("--seq", fl_params.seq_len, "tokens per example");
    fl->add_option("--n-forget", fl_params.n_forget, "|D_f|");
    fl->add_option("--n-retain", fl_params.n_retain, "|D_r|");
    fl->add_option("--batch-size", fl_params.batch_size, "examples per step");
    fl->add_option("--epochs", fl_params.epochs, "training epochs");
    fl->add_option("--rank", fl_params.lora_rank, "LoRA rank");
    fl->add_option("--start-layer", fl_params.start_layer, "KVW edit range start");
    fl->add_option("--end-layer", fl_params.end_layer, "KVW edit range end (default: last)");
    fl->add_option("--out", fl_out, "JSON output path");

    try {
        app.parse(argc, argv);
        const json cfg = load_config_file(config_path);

        if (sb->parsed()) return cmd_build_synth(*sb, cfg, sp, sb_out);
        if (pr->parsed()) {
            return cmd_precompute_retain(*pr, cfg, pr_model, pr_dataset, pr_out, pr_all_tokens,
                                         pr_mode);
        }
        if (ul->parsed()) {
            return cmd_unlearn(*ul, cfg, ul_model, ul_forget, ul_cache, ul_out, ul_report, ul_cfg,
                               ul_no_retain, ul_all_tokens, ul_mode, ul_seed);
        }
        if (ev->parsed()) return cmd_eval(*ev, cfg, ev_suite, ev_model, ev_out);
        if (sw->parsed()) {
            return cmd_sweep(*sw, cfg, sw_kind, sw_suite, sw_dir, sw_gammas, sw_cfg, sw_floor,
                             sw_buckets);
        }
        if (rp->parsed()) return cmd_report(*rp, cfg, rp_dir, rp_out);
        if (fl->parsed()) return cmd_flops(*fl, cfg, fl_method, fl_params, fl_out);
        return kExitConfig;
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const kvw::numeric_error & e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const kvw::config_error & e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const kvw::input_error & e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
