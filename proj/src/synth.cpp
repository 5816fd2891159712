#include "kvw/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "kvw/coeffs.hpp"
#include "kvw/errors.hpp"
#include "kvw/rng.hpp"

namespace kvw {

using nlohmann::json;

ModelConfig SynthParams::effective_config() const {
    ModelConfig c = config;
    if (c.num_layers == 0) c.num_layers = 4;
    if (c.d_model == 0) c.d_model = 64;
    if (c.ffn_dim == 0) c.ffn_dim = 256;
    if (c.num_heads == 0) c.num_heads = 4;
    if (c.vocab_size == 0) c.vocab_size = 512;
    if (c.max_seq_len == 0) c.max_seq_len = 8;
    return c;
}

TokenExample fact_example(const FactSpec & fact) {
    TokenExample ex;
    ex.tokens = {fact.subject_token, fact.relation_token, fact.answer_token};
    ex.answer_mask = {0, 0, 1};
    return ex;
}

std::vector<int32_t> fact_query(const FactSpec & fact) {
    return {fact.subject_token, fact.relation_token};
}

static void normalize_rows(Matrix & m) {
    for (size_t r = 0; r < m.rows; r++) {
        float * row = m.row(r);
        double ss = 0.0;
        for (size_t c = 0; c < m.cols; c++) ss += static_cast<double>(row[c]) * row[c];
        const double inv = 1.0 / std::sqrt(std::max(ss, 1e-30));
        for (size_t c = 0; c < m.cols; c++) row[c] = static_cast<float>(row[c] * inv);
    }
}

// orthonormalize the embedding rows of the given token ids against each
// other (modified Gram-Schmidt); requires count <= d
static void orthonormalize_embeddings(Matrix & emb, const std::vector<int32_t> & ids) {
    const size_t d = emb.cols;
    for (size_t i = 0; i < ids.size(); i++) {
        float * v = emb.row(static_cast<size_t>(ids[i]));
        for (size_t j = 0; j < i; j++) {
            const float * u = emb.row(static_cast<size_t>(ids[j]));
            double proj = 0.0;
            for (size_t c = 0; c < d; c++) proj += static_cast<double>(v[c]) * u[c];
            for (size_t c = 0; c < d; c++) v[c] = static_cast<float>(v[c] - proj * u[c]);
        }
        double ss = 0.0;
        for (size_t c = 0; c < d; c++) ss += static_cast<double>(v[c]) * v[c];
        const double inv = 1.0 / std::sqrt(std::max(ss, 1e-30));
        for (size_t c = 0; c < d; c++) v[c] = static_cast<float>(v[c] * inv);
    }
}

void plant_facts(ModelWeights & weights, const std::vector<FactSpec> & facts,
                 const SynthParams & params, const std::vector<int> & overlap_source,
                 const std::vector<int> & subject_source) {
    const ModelConfig & cfg = weights.config;
    const size_t d = static_cast<size_t>(cfg.d_model);
    if (!overlap_source.empty() && overlap_source.size() != facts.size()) {
        throw config_error("overlap_source size does not match fact count");
    }
    if (!subject_source.empty() && subject_source.size() != facts.size()) {
        throw config_error("subject_source size does not match fact count");
    }

    std::set<std::pair<int, int>> used;
    for (const FactSpec & f : facts) {
        if (f.layer < 0 || f.layer >= cfg.num_layers) {
            throw config_error("fact layer " + std::to_string(f.layer) + " out of range");
        }
        if (f.slot < 0 || f.slot >= cfg.ffn_dim) {
            throw config_error("fact slot " + std::to_string(f.slot) + " exceeds ffn_dim capacity " +
                               std::to_string(cfg.ffn_dim));
        }
        if (!used.insert({f.layer, f.slot}).second) {
            throw config_error("duplicate fact slot (layer " + std::to_string(f.layer) + ", slot " +
                               std::to_string(f.slot) + ")");
        }
        for (int32_t id : {f.subject_token, f.relation_token, f.answer_token}) {
            if (id < 0 || id >= cfg.vocab_size) {
                throw config_error("fact token id " + std::to_string(id) + " out of vocabulary");
            }
        }
        if (f.answer_token == f.subject_token || f.answer_token == f.relation_token) {
            throw config_error("fact answer token collides with its prompt tokens");
        }
        if (f.strength <= 0.0f) throw config_error("fact strength must be positive");
    }

    // the 3-token template: query at position 1, answer at position 2
    const size_t query_pos = 1;
    const size_t ans_pos = 2;
    if (weights.pos_embedding.rows <= ans_pos) {
        throw config_error("max_seq_len too small for the fact template");
    }

    // Keys are matched filters on the fact's own measured hidden states at
    // the planted layer, built from four channels: (1) the query state with
    // every other fact's query/answer state projected out, so recall firing
    // carries zero interference at any depth; (2) the answer state deflated
    // the same way, which drives extraction at answer positions, keeping the
    // component shared with an overlap source at a calibrated level; (3) for
    // shared-subject facts, a prompt-position channel orthogonal to all
    // query/answer states, visible only to all-token extraction; (4) a small
    // common direction firing uniformly at answer positions, which cancels
    // in the forget/retain ratio. States at a layer do not depend on that
    // layer's own rows, so installing per layer group in ascending order
    // keeps every measurement exact.
    std::vector<size_t> order(facts.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return facts[a].layer < facts[b].layer; });

    auto project_out = [&](std::vector<double> & v, const std::vector<std::vector<double>> & basis) {
        for (const std::vector<double> & u : basis) {
            double proj = 0.0;
            for (size_t j = 0; j < d; j++) proj += v[j] * u[j];
            for (size_t j = 0; j < d; j++) v[j] -= proj * u[j];
        }
    };
    auto unit = [&](std::vector<double> & v) {
        double ss = 0.0;
        for (size_t j = 0; j < d; j++) ss += v[j] * v[j];
        const double inv = 1.0 / std::sqrt(std::max(ss, 1e-30));
        for (size_t j = 0; j < d; j++) v[j] *= inv;
        return std::sqrt(ss);
    };
    // modified Gram-Schmidt basis over the given vectors
    auto orthobasis = [&](const std::vector<std::vector<double>> & vecs) {
        std::vector<std::vector<double>> basis;
        for (std::vector<double> v : vecs) {
            project_out(v, basis);
            double ss = 0.0;
            for (size_t j = 0; j < d; j++) ss += v[j] * v[j];
            if (ss > 1e-12) {
                const double inv = 1.0 / std::sqrt(ss);
                for (size_t j = 0; j < d; j++) v[j] *= inv;
                basis.push_back(std::move(v));
            }
        }
        return basis;
    };

    size_t g0 = 0;
    while (g0 < order.size()) {
        size_t g1 = g0;
        const int layer = facts[order[g0]].layer;
        while (g1 < order.size() && facts[order[g1]].layer == layer) g1++;
        const size_t group = g1 - g0;

        // measure normed FFN-input states at the subject, query and answer
        // positions (shared-subject facts have bit-identical subject states)
        std::vector<std::vector<double>> state_s(group), state_q(group), state_a(group);
        std::vector<double> mean_a(d, 0.0);
        for (size_t g = 0; g < group; g++) {
            const FactSpec & f = facts[order[g0 + g]];
            const std::vector<int32_t> probe = {f.subject_token, f.relation_token, f.answer_token};
            ForwardTrace trace = forward_with_trace(weights, probe);
            const Matrix & in = trace.ffn_in[static_cast<size_t>(layer)];
            state_s[g].assign(in.row(0), in.row(0) + d);
            state_q[g].assign(in.row(query_pos), in.row(query_pos) + d);
            state_a[g].assign(in.row(ans_pos), in.row(ans_pos) + d);
            for (size_t j = 0; j < d; j++) mean_a[j] += state_a[g][j] / static_cast<double>(group);
        }
        const std::vector<std::vector<double>> query_span = orthobasis(state_q);

        // common answer-position direction, silent at query positions
        std::vector<double> common = mean_a;
        project_out(common, query_span);
        unit(common);

        for (size_t g = 0; g < group; g++) {
            const size_t fact_idx = order[g0 + g];
            const FactSpec & f = facts[fact_idx];
            LayerWeights & lw = weights.layers[static_cast<size_t>(f.layer)];
            const int source =
                overlap_source.empty() ? -1 : overlap_source[fact_idx];
            const int subj_source =
                subject_source.empty() ? -1 : subject_source[fact_idx];

            // query channel: own query state with every other fact's query
            // and answer state projected out; recall firing interferes with
            // nothing else
            std::vector<std::vector<double>> others;
            for (size_t o = 0; o < group; o++) {
                if (o != g) others.push_back(state_q[o]);
                others.push_back(state_a[o]);
            }
            std::vector<double> kq = state_q[g];
            project_out(kq, orthobasis(others));
            unit(kq);

            // prompt channel: the fact's subject-position state, deflated
            // against every query and answer state and against the mean
            // subject state (the common prompt template). What remains is
            // subject-specific prompt content: shared-subject pairs have
            // bit-identical subject states, so the channel fires on the
            // source's prompt too, while answer-only extraction never sees
            // it and the query-fire calibration below stays untouched.
            std::vector<double> k_subj(d, 0.0);
            double subj_norm = 0.0;
            if (subj_source >= 0) {
                std::vector<std::vector<double>> subj_others = state_q;
                for (size_t o = 0; o < group; o++) subj_others.push_back(state_a[o]);
                std::vector<double> mean_s(d, 0.0);
                for (size_t o = 0; o < group; o++) {
                    for (size_t j = 0; j < d; j++) {
                        mean_s[j] += state_s[o][j] / static_cast<double>(group);
                    }
                }
                subj_others.push_back(std::move(mean_s));
                k_subj = state_s[g];
                project_out(k_subj, orthobasis(subj_others));
                subj_norm = unit(k_subj);
            }

            // answer channel, split in two: the part unique to this fact and
            // the part shared with its overlap source. Separate weights keep
            // extraction firing strong while the leak onto the source's
            // weakening pressure stays small and controlled.
            std::vector<std::vector<double>> ans_all = state_q;
            std::vector<std::vector<double>> ans_keep = state_q;
            for (size_t o = 0; o < group; o++) {
                if (o == g) continue;
                ans_all.push_back(state_a[o]);
                if (source >= 0 && static_cast<int>(order[g0 + o]) == source) continue;
                ans_keep.push_back(state_a[o]);
            }
            std::vector<double> ka_unique = state_a[g];
            project_out(ka_unique, orthobasis(ans_all));
            std::vector<double> ka_shared(d, 0.0);
            if (source >= 0) {
                std::vector<double> kept = state_a[g];
                project_out(kept, orthobasis(ans_keep));
                for (size_t j = 0; j < d; j++) ka_shared[j] = kept[j] - ka_unique[j];
            }
            unit(ka_unique);
            const double shared_norm = unit(ka_shared);

            // every coupling channel is orthogonal to the own query state,
            // so the query-fire calibration pins kq alone and the channel
            // firing levels below come out exact
            const double kq_fire = [&] {
                double v = 0.0;
                for (size_t j = 0; j < d; j++) v += kq[j] * state_q[g][j];
                return v;
            }();
            const double fire_scale =
                kq_fire > 1e-3
                    ? std::clamp(static_cast<double>(params.target_query_fire) / kq_fire,
                                 static_cast<double>(params.key_gain) * 0.25,
                                 static_cast<double>(params.key_gain) * 8.0)
                    : static_cast<double>(params.key_gain);

            double overlap_w = 0.0;
            if (shared_norm > 1e-6 && source >= 0) {
                double on_source = 0.0;
                const size_t src_g = [&] {
                    for (size_t o = 0; o < group; o++) {
                        if (static_cast<int>(order[g0 + o]) == source) return o;
                    }
                    return g;
                }();
                for (size_t j = 0; j < d; j++) on_source += ka_shared[j] * state_a[src_g][j];
                if (on_source > 1e-3) {
                    overlap_w = params.target_overlap_fire / (fire_scale * on_source);
                }
            }
            double subject_w = 0.0;
            if (subj_norm > 1e-6) {
                subject_w = params.target_prompt_fire / (fire_scale * subj_norm);
            }

            std::vector<double> dir(d);
            for (size_t j = 0; j < d; j++) {
                dir[j] = kq[j] + params.answer_weight * ka_unique[j] +
                         params.common_weight * common[j] + overlap_w * ka_shared[j] +
                         subject_w * k_subj[j];
            }

            float * key = lw.ffn_key.row(static_cast<size_t>(f.slot));
            for (size_t j = 0; j < d; j++) key[j] = static_cast<float>(dir[j] * fire_scale);

            // value pushes the answer token through the unembedding
            const float * u_a = weights.unembedding.row(static_cast<size_t>(f.answer_token));
            float * value = lw.ffn_value.row(static_cast<size_t>(f.slot));
            for (size_t j = 0; j < d; j++) value[j] = f.strength * u_a[j];
        }
        g0 = g1;
    }

    // strength calibration: deep stacks dilute the planted signal, so boost
    // value rows until every fact clears the runner-up logit by the target
    // margin. Facts interact only weakly; a few rounds settle.
    if (params.target_margin > 0.0f) {
        for (int round = 0; round < 4; round++) {
            bool changed = false;
            for (const FactSpec & f : facts) {
                const std::vector<int32_t> query = {f.subject_token, f.relation_token};
                for (int boost = 0; boost < 6; boost++) {
                    ForwardTrace trace = forward_with_trace(weights, query);
                    const float * logits = trace.logits.row(query.size() - 1);
                    float runner_up = -1e30f;
                    for (int t = 0; t < weights.config.vocab_size; t++) {
                        if (t != f.answer_token && logits[t] > runner_up) runner_up = logits[t];
                    }
                    if (logits[f.answer_token] - runner_up >= params.target_margin) break;
                    float * value = weights.layers[static_cast<size_t>(f.layer)].ffn_value.row(
                        static_cast<size_t>(f.slot));
                    for (size_t j = 0; j < d; j++) value[j] *= 1.4f;
                    changed = true;
                }
            }
            if (!changed) break;
        }
    }
}

SynthBuild build_synth(const SynthParams & params) {
    if (params.n_forget < 0 || params.n_retain < 0) {
        throw config_error("fact counts must be nonnegative");
    }
    ModelConfig cfg = params.effective_config();
    cfg.validate();
    if (cfg.activation != Activation::relu || cfg.ffn_variant != FfnVariant::plain ||
        cfg.norm != NormKind::rmsnorm) {
        throw config_error("synthetic builder supports relu activation, plain ffn, rmsnorm only");
    }

    const int n_f = params.n_forget;
    const int n_r = params.n_retain;
    if (n_f + n_r > cfg.ffn_dim) {
        throw config_error("fact count " + std::to_string(n_f + n_r) + " exceeds ffn_dim capacity " +
                           std::to_string(cfg.ffn_dim));
    }
    // token id layout: three disjoint pools
    const int n_tokens = n_f + n_r;
    const int subj_base = 1;
    const int rel_base = subj_base + n_tokens;
    const int ans_base = rel_base + n_tokens;
    if (ans_base + n_tokens > cfg.vocab_size) {
        throw config_error("vocab_size " + std::to_string(cfg.vocab_size) + " too small for " +
                           std::to_string(n_tokens) + " facts");
    }
    int planted_layer = params.planted_layer;
    if (planted_layer < 0) planted_layer = cfg.num_layers / 2;
    if (planted_layer >= cfg.num_layers) {
        throw config_error("planted layer " + std::to_string(planted_layer) + " out of range");
    }

    Rng rng(params.seed);
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t m = static_cast<size_t>(cfg.ffn_dim);

    SynthBuild build;
    build.seed = params.seed;
    ModelWeights & w = build.weights;
    w.config = cfg;

    auto fill_noise = [&](Matrix & mat, size_t r, size_t c, float scale) {
        mat = Matrix(r, c);
        for (float & f : mat.data) f = static_cast<float>(rng.normal()) * scale;
    };

    // unit-norm random token embeddings and unembedding rows; position rows
    // orthonormal so the key-bias threshold is exactly zero away from the
    // answer position
    fill_noise(w.tok_embedding, static_cast<size_t>(cfg.vocab_size), d, 1.0f);
    normalize_rows(w.tok_embedding);
    fill_noise(w.pos_embedding, static_cast<size_t>(cfg.max_seq_len), d, 1.0f);
    if (static_cast<size_t>(cfg.max_seq_len) <= d) {
        std::vector<int32_t> pos_ids(static_cast<size_t>(cfg.max_seq_len));
        for (size_t i = 0; i < pos_ids.size(); i++) pos_ids[i] = static_cast<int32_t>(i);
        orthonormalize_embeddings(w.pos_embedding, pos_ids);
    } else {
        normalize_rows(w.pos_embedding);
    }

    w.layers.resize(static_cast<size_t>(cfg.num_layers));
    for (LayerWeights & lw : w.layers) {
        lw.attn_norm.assign(d, 1.0f);
        fill_noise(lw.wq, d, d, params.noise_scale);
        fill_noise(lw.wk, d, d, params.noise_scale);
        // near-uniform attention that copies a scaled mix of the prefix
        lw.wv = Matrix(d, d);
        for (size_t j = 0; j < d; j++) lw.wv.at(j, j) = params.attn_value_scale;
        lw.wo = Matrix(d, d);
        for (size_t j = 0; j < d; j++) lw.wo.at(j, j) = 1.0f;
        lw.ffn_norm.assign(d, 1.0f);
        fill_noise(lw.ffn_key, m, d, params.noise_scale);
        fill_noise(lw.ffn_value, m, d, params.noise_scale);
    }
    w.final_norm.assign(d, 1.0f);
    fill_noise(w.unembedding, static_cast<size_t>(cfg.vocab_size), d, 1.0f);
    normalize_rows(w.unembedding);

    // facts: forget facts take slots [0, n_f), retain facts the next n_r.
    // A third of the retain facts reuse a forget subject (same entity,
    // different question) and another third get answer embeddings that
    // partially overlap a forget answer, so the suite carries the shared
    // structure that makes the forget/retain trade-off non-trivial.
    if (static_cast<size_t>(2 * n_tokens) > d) {
        throw config_error("fact count " + std::to_string(n_tokens) + " exceeds d_model capacity " +
                           std::to_string(d / 2) + " for separable relation/answer embeddings");
    }
    for (int i = 0; i < n_f; i++) {
        FactSpec f;
        f.subject_token = subj_base + i;
        f.relation_token = rel_base + i;
        f.answer_token = ans_base + i;
        f.layer = planted_layer;
        f.slot = i;
        f.strength = params.value_gain;
        build.forget_facts.push_back(f);
    }
    for (int j = 0; j < n_r; j++) {
        FactSpec f;
        // one retain fact per forget subject: same entity, different question
        if (n_f > 0 && j % 3 == 0 && j / 3 < n_f) {
            f.subject_token = build.forget_facts[static_cast<size_t>(j / 3)].subject_token;
        } else {
            f.subject_token = subj_base + n_f + j;
        }
        f.relation_token = rel_base + n_f + j;
        f.answer_token = ans_base + n_f + j;
        f.layer = planted_layer;
        f.slot = n_f + j;
        f.strength = params.value_gain;
        build.retain_facts.push_back(f);
    }

    std::vector<FactSpec> all_facts = build.forget_facts;
    all_facts.insert(all_facts.end(), build.retain_facts.begin(), build.retain_facts.end());

    // mutually orthogonal relation and answer embeddings: cross-fact firing
    // through these channels is exactly zero unless introduced through the
    // overlap mix below; subjects stay random (and deliberately shared).
    // Answer unembedding rows are orthogonalized as well so a planted value
    // only ever pushes its own answer logit.
    std::vector<int32_t> ortho_ids;
    for (const FactSpec & f : all_facts) ortho_ids.push_back(f.relation_token);
    for (const FactSpec & f : all_facts) ortho_ids.push_back(f.answer_token);
    orthonormalize_embeddings(w.tok_embedding, ortho_ids);

    std::vector<int32_t> answer_ids;
    for (const FactSpec & f : all_facts) answer_ids.push_back(f.answer_token);
    orthonormalize_embeddings(w.unembedding, answer_ids);

    std::vector<int> overlap_source(all_facts.size(), -1);
    std::vector<int> subject_source(all_facts.size(), -1);
    for (int j = 0; j < n_r; j++) {
        if (n_f > 0 && j % 3 == 0 && j / 3 < n_f) {
            subject_source[static_cast<size_t>(n_f + j)] = j / 3;
        }
        if (n_f > 0 && j % 3 == 1 && params.answer_overlap > 0.0f) {
            const int src_idx = (j / 3) % n_f;
            const float alpha = params.answer_overlap;
            const float beta = std::sqrt(std::max(0.0f, 1.0f - alpha * alpha));
            const FactSpec & src = build.forget_facts[static_cast<size_t>(src_idx)];
            float * e = w.tok_embedding.row(
                static_cast<size_t>(build.retain_facts[static_cast<size_t>(j)].answer_token));
            const float * e_src = w.tok_embedding.row(static_cast<size_t>(src.answer_token));
            for (size_t c = 0; c < d; c++) e[c] = beta * e[c] + alpha * e_src[c];
            overlap_source[static_cast<size_t>(n_f + j)] = src_idx;
        }
    }

    plant_facts(w, all_facts, params, overlap_source, subject_source);

    for (const FactSpec & f : build.forget_facts) build.forget_data.push_back(fact_example(f));
    for (const FactSpec & f : build.retain_facts) build.retain_data.push_back(fact_example(f));

    if (!params.verify) return build;

    // construction guarantee: every planted fact recalls pre-edit
    auto verify_recall = [&](const std::vector<FactSpec> & facts, const char * which) {
        RecallResult r = evaluate_recall(w, facts);
        if (r.accuracy < 1.0) {
            std::string ids;
            for (size_t i = 0; i < facts.size(); i++) {
                if (!r.hits[i]) ids += (ids.empty() ? "" : ",") + std::to_string(i);
            }
            throw config_error(std::string("synthetic construction failed: ") + which +
                               " facts without pre-edit recall: [" + ids + "]");
        }
    };
    verify_recall(build.forget_facts, "forget");
    verify_recall(build.retain_facts, "retain");

    // separability: forget slots must respond more strongly to forget
    // queries than to retain queries at the answer positions
    if (n_f > 0 && n_r > 0) {
        KnowledgeCoefficients c_f = accumulate(build.forget_data, w, true, CoeffMode::magnitude,
                                               CoeffSource::forget);
        KnowledgeCoefficients c_r = accumulate(build.retain_data, w, true, CoeffMode::magnitude,
                                               CoeffSource::retain);
        std::string bad;
        for (const FactSpec & f : build.forget_facts) {
            const float on_forget = c_f.per_layer[static_cast<size_t>(f.layer)][static_cast<size_t>(f.slot)];
            const float on_retain = c_r.per_layer[static_cast<size_t>(f.layer)][static_cast<size_t>(f.slot)];
            if (!(on_forget > on_retain)) {
                bad += (bad.empty() ? "" : ",") + std::to_string(f.slot);
            }
        }
        if (!bad.empty()) {
            throw config_error("synthetic construction failed separability at slots [" + bad + "]");
        }
    }
    return build;
}

RecallResult evaluate_recall(const ModelWeights & weights, const std::vector<FactSpec> & facts) {
    RecallResult r;
    r.hits.reserve(facts.size());
    size_t hits = 0;
    for (const FactSpec & f : facts) {
        const std::vector<int32_t> query = fact_query(f);
        const int32_t predicted = greedy_next_token(weights, query);
        const bool hit = predicted == f.answer_token;
        r.hits.push_back(hit ? 1 : 0);
        hits += hit;
    }
    r.accuracy = facts.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(facts.size());
    return r;
}

static json fact_to_json(const FactSpec & f) {
    return json{{"subject", f.subject_token}, {"relation", f.relation_token},
                {"answer", f.answer_token},   {"layer", f.layer},
                {"slot", f.slot},             {"strength", f.strength}};
}

static FactSpec fact_from_json(const json & j) {
    FactSpec f;
    f.subject_token = j.at("subject").get<int32_t>();
    f.relation_token = j.at("relation").get<int32_t>();
    f.answer_token = j.at("answer").get<int32_t>();
    f.layer = j.at("layer").get<int>();
    f.slot = j.at("slot").get<int>();
    f.strength = j.at("strength").get<float>();
    return f;
}

SynthSuite build_suite_files(const SynthParams & params, const std::string & out_dir) {
    SynthBuild build = build_synth(params);

    std::filesystem::create_directories(out_dir);
    SynthSuite suite;
    suite.model_path = out_dir + "/model.kvwm";
    suite.forget_dataset_path = out_dir + "/forget.jsonl";
    suite.retain_dataset_path = out_dir + "/retain.jsonl";
    suite.forget_facts = build.forget_facts;
    suite.retain_facts = build.retain_facts;
    suite.seed = params.seed;

    save_model(build.weights, suite.model_path);
    save_dataset(build.forget_data, suite.forget_dataset_path);
    save_dataset(build.retain_data, suite.retain_dataset_path);

    json manifest;
    manifest["model"] = "model.kvwm";
    manifest["forget_dataset"] = "forget.jsonl";
    manifest["retain_dataset"] = "retain.jsonl";
    manifest["seed"] = suite.seed;
    manifest["forget_facts"] = json::array();
    for (const FactSpec & f : build.forget_facts) manifest["forget_facts"].push_back(fact_to_json(f));
    manifest["retain_facts"] = json::array();
    for (const FactSpec & f : build.retain_facts) manifest["retain_facts"].push_back(fact_to_json(f));

    std::ofstream mf(out_dir + "/manifest.json");
    if (!mf) throw input_error("cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
    return suite;
}

SynthSuite load_suite(const std::string & manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw input_error("cannot open suite manifest: " + manifest_path);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception & e) {
        throw input_error("bad suite manifest " + manifest_path + ": " + e.what());
    }
    const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
    const std::string base = dir.empty() ? "." : dir;

    SynthSuite suite;
    suite.model_path = base + "/" + manifest.at("model").get<std::string>();
    suite.forget_dataset_path = base + "/" + manifest.at("forget_dataset").get<std::string>();
    suite.retain_dataset_path = base + "/" + manifest.at("retain_dataset").get<std::string>();
    suite.seed = manifest.value("seed", 0ULL);
    for (const json & j : manifest.at("forget_facts")) suite.forget_facts.push_back(fact_from_json(j));
    for (const json & j : manifest.at("retain_facts")) suite.retain_facts.push_back(fact_from_json(j));
    return suite;
}

}  // namespace kvw
