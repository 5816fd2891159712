#include "kvw/weaken.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "kvw/errors.hpp"

namespace kvw {

using nlohmann::json;

void KvwConfig::validate(const ModelConfig & model) const {
    if (gamma < 0.0) throw config_error("gamma must be >= 0");
    if (eps <= 0.0) throw config_error("eps must be > 0");
    if (start_layer < 0 || end_layer < start_layer || end_layer >= model.num_layers) {
        throw config_error("layer range [" + std::to_string(start_layer) + ", " +
                           std::to_string(end_layer) + "] invalid for " +
                           std::to_string(model.num_layers) + " layers");
    }
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
}

ForgetKnowledgeAccessor compute_fka(const KnowledgeCoefficients & c_f,
                                    const KnowledgeCoefficients & c_r, double eps) {
    if (c_f.layer_count() != c_r.layer_count() || c_f.width() != c_r.width()) {
        throw config_error("forget/retain coefficient dimensions differ: " +
                           std::to_string(c_f.layer_count()) + "x" + std::to_string(c_f.width()) +
                           " vs " + std::to_string(c_r.layer_count()) + "x" +
                           std::to_string(c_r.width()));
    }
    if (eps <= 0.0) throw config_error("eps must be > 0");

    ForgetKnowledgeAccessor a;
    a.per_layer.resize(c_f.layer_count());
    for (size_t l = 0; l < c_f.layer_count(); l++) {
        const std::vector<float> & f = c_f.per_layer[l];
        const std::vector<float> & r = c_r.per_layer[l];
        std::vector<double> & out = a.per_layer[l];
        out.resize(f.size());
        for (size_t i = 0; i < f.size(); i++) {
            const double num = std::max(static_cast<double>(f[i]), eps);
            const double den = std::max(static_cast<double>(r[i]), eps);
            out[i] = std::max(0.0, std::log(num / den));
        }
    }
    return a;
}

GateVector gate(const ForgetKnowledgeAccessor & a, double gamma) {
    if (gamma < 0.0) throw config_error("gamma must be >= 0");
    GateVector g;
    g.per_layer.resize(a.per_layer.size());
    for (size_t l = 0; l < a.per_layer.size(); l++) {
        g.per_layer[l].resize(a.per_layer[l].size());
        for (size_t i = 0; i < a.per_layer[l].size(); i++) {
            const double e = gamma * a.per_layer[l][i];
            g.per_layer[l][i] = e == 0.0 ? 1.0 : std::exp(-e);
        }
    }
    return g;
}

EditSummary apply_weakening(ModelWeights & weights, const GateVector & g, int start_layer,
                            int end_layer) {
    const size_t m = static_cast<size_t>(weights.config.ffn_dim);
    const size_t d = static_cast<size_t>(weights.config.d_model);
    if (start_layer < 0 || end_layer < start_layer || end_layer >= weights.config.num_layers) {
        throw config_error("weakening layer range out of bounds");
    }
    if (g.per_layer.size() != static_cast<size_t>(weights.config.num_layers)) {
        throw config_error("gate vector layer count does not match model");
    }

    EditSummary summary;
    for (int l = start_layer; l <= end_layer; l++) {
        const std::vector<double> & gl = g.per_layer[static_cast<size_t>(l)];
        if (gl.size() != m) throw config_error("gate width does not match ffn_dim");

        LayerEditStats stats;
        stats.layer = l;
        double gate_sum = 0.0;
        Matrix & values = weights.layers[static_cast<size_t>(l)].ffn_value;
        for (size_t i = 0; i < m; i++) {
            const double gi = gl[i];
            gate_sum += gi;
            if (gi < stats.min_gate) stats.min_gate = gi;
            if (gi < 1.0 - 1e-9) stats.rows_weakened++;
            if (gi != 1.0) {
                float * row = values.row(i);
                for (size_t j = 0; j < d; j++) {
                    row[j] = static_cast<float>(static_cast<double>(row[j]) * gi);
                }
            }
        }
        stats.mean_gate = gate_sum / static_cast<double>(m);
        summary.total_rows_weakened += stats.rows_weakened;
        summary.layers.push_back(stats);
    }
    return summary;
}

static KnowledgeCoefficients layer_mean_substitute(const KnowledgeCoefficients & c_f) {
    // "without retain" ablation: contrast each row against the layer's own
    // mean forget activation
    KnowledgeCoefficients c;
    c.source = CoeffSource::retain;
    c.token_count = c_f.token_count;
    c.per_layer.resize(c_f.layer_count());
    for (size_t l = 0; l < c_f.layer_count(); l++) {
        double sum = 0.0;
        for (float v : c_f.per_layer[l]) sum += v;
        const float mean = static_cast<float>(sum / static_cast<double>(c_f.width()));
        c.per_layer[l].assign(c_f.width(), mean);
    }
    return c;
}

RunReport kvw_unlearn(ModelWeights & weights, const Dataset & forget,
                      const KnowledgeCoefficients * retain_coeffs, const KvwConfig & cfg) {
    cfg.validate(weights.config);
    if (cfg.use_retain) {
        if (retain_coeffs == nullptr) {
            throw config_error("use_retain requires precomputed retain coefficients");
        }
        retain_coeffs->check_compatible(weights.config);
    }

    RunReport report;
    report.cfg = cfg;
    report.order_hash = dataset_hash(forget);
    report.example_count = forget.size();

    const size_t layers = static_cast<size_t>(weights.config.num_layers);
    const size_t m = static_cast<size_t>(weights.config.ffn_dim);

    size_t pos = 0;
    int batch_index = 0;
    while (pos < forget.size()) {
        const size_t batch_end = std::min(pos + static_cast<size_t>(cfg.batch_size), forget.size());

        // forward the batch on the current (progressively edited) weights
        CoeffAccumulator acc;
        acc.init(layers, m);
        for (size_t i = pos; i < batch_end; i++) {
            acc.add_example(forget[i], weights, cfg.ans_only, cfg.coeff_mode);
        }
        KnowledgeCoefficients c_f = acc.finish(CoeffSource::forget);

        ForgetKnowledgeAccessor a;
        if (cfg.use_retain) {
            a = compute_fka(c_f, *retain_coeffs, cfg.eps);
        } else {
            KnowledgeCoefficients substitute = layer_mean_substitute(c_f);
            a = compute_fka(c_f, substitute, cfg.eps);
        }
        GateVector g = gate(a, cfg.gamma);
        EditSummary edit = apply_weakening(weights, g, cfg.start_layer, cfg.end_layer);

        BatchSummary bs;
        bs.batch_index = batch_index;
        bs.example_count = batch_end - pos;
        bs.positions = c_f.token_count;
        double fka_sum = 0.0, gate_sum = 0.0;
        size_t n = 0;
        for (int l = cfg.start_layer; l <= cfg.end_layer; l++) {
            for (size_t i = 0; i < m; i++) {
                fka_sum += a.per_layer[static_cast<size_t>(l)][i];
                gate_sum += g.per_layer[static_cast<size_t>(l)][i];
                n++;
            }
        }
        bs.mean_fka = fka_sum / static_cast<double>(n);
        bs.mean_gate = gate_sum / static_cast<double>(n);
        bs.layers = edit.layers;
        report.batches.push_back(std::move(bs));

        pos = batch_end;
        batch_index++;
    }
    report.batch_count = report.batches.size();
    return report;
}

static std::string hex64_str(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string RunReport::to_json() const {
    uint64_t rows_weakened = 0;
    for (const BatchSummary & b : batches) {
        for (const LayerEditStats & ls : b.layers) rows_weakened += ls.rows_weakened;
    }

    json j;
    j["config"] = {
        {"gamma", cfg.gamma},
        {"start_layer", cfg.start_layer},
        {"end_layer", cfg.end_layer},
        {"eps", cfg.eps},
        {"ans_only", cfg.ans_only},
        {"use_retain", cfg.use_retain},
        {"batch_size", cfg.batch_size},
        {"coeff_mode", to_string(cfg.coeff_mode)},
    };
    j["order_hash"] = hex64_str(order_hash);
    j["batch_count"] = batch_count;
    j["example_count"] = example_count;
    j["rows_weakened_total"] = rows_weakened;
    j["identity_run"] = rows_weakened == 0;
    j["batches"] = json::array();
    for (const BatchSummary & b : batches) {
        json jb;
        jb["batch"] = b.batch_index;
        jb["examples"] = b.example_count;
        jb["positions"] = b.positions;
        jb["mean_fka"] = b.mean_fka;
        jb["mean_gate"] = b.mean_gate;
        jb["layers"] = json::array();
        for (const LayerEditStats & ls : b.layers) {
            jb["layers"].push_back({{"layer", ls.layer},
                                    {"rows_weakened", ls.rows_weakened},
                                    {"min_gate", ls.min_gate},
                                    {"mean_gate", ls.mean_gate}});
        }
        j["batches"].push_back(std::move(jb));
    }
    return j.dump(2) + "\n";
}

}  // namespace kvw
