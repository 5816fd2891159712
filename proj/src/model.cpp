#include "kvw/model.hpp"

#include <cmath>

#include "kvw/errors.hpp"
#include "kvw/rng.hpp"

namespace kvw {

static float apply_activation(Activation act, float v) {
    switch (act) {
        case Activation::relu:
            return v > 0.0f ? v : 0.0f;
        case Activation::gelu:
            // tanh approximation
            return 0.5f * v * (1.0f + std::tanh(0.7978845608028654f * (v + 0.044715f * v * v * v)));
        case Activation::silu:
            return v / (1.0f + std::exp(-v));
    }
    return v;
}

static void check_shape(bool ok, const std::string & name) {
    if (!ok) throw config_error("tensor shape mismatch: " + name);
}

void ModelWeights::validate_shapes() const {
    config.validate();
    const size_t d = static_cast<size_t>(config.d_model);
    const size_t m = static_cast<size_t>(config.ffn_dim);
    check_shape(tok_embedding.rows == static_cast<size_t>(config.vocab_size) && tok_embedding.cols == d,
                "tok_embedding");
    check_shape(pos_embedding.rows == static_cast<size_t>(config.max_seq_len) && pos_embedding.cols == d,
                "pos_embedding");
    check_shape(layers.size() == static_cast<size_t>(config.num_layers), "layers");
    for (size_t l = 0; l < layers.size(); l++) {
        const LayerWeights & lw = layers[l];
        const std::string tag = "layers." + std::to_string(l) + ".";
        check_shape(lw.attn_norm.size() == d, tag + "attn_norm");
        check_shape(lw.wq.rows == d && lw.wq.cols == d, tag + "wq");
        check_shape(lw.wk.rows == d && lw.wk.cols == d, tag + "wk");
        check_shape(lw.wv.rows == d && lw.wv.cols == d, tag + "wv");
        check_shape(lw.wo.rows == d && lw.wo.cols == d, tag + "wo");
        check_shape(lw.ffn_norm.size() == d, tag + "ffn_norm");
        check_shape(lw.ffn_key.rows == m && lw.ffn_key.cols == d, tag + "ffn_key");
        check_shape(lw.ffn_value.rows == m && lw.ffn_value.cols == d, tag + "ffn_value");
        if (config.ffn_variant == FfnVariant::gated) {
            check_shape(lw.ffn_gate.has_value() && lw.ffn_gate->rows == m && lw.ffn_gate->cols == d,
                        tag + "ffn_gate");
        } else if (lw.ffn_gate.has_value()) {
            throw config_error("plain ffn variant carries a gate tensor at layer " + std::to_string(l));
        }
    }
    check_shape(final_norm.size() == d, "final_norm");
    check_shape(unembedding.rows == static_cast<size_t>(config.vocab_size) && unembedding.cols == d,
                "unembedding");
}

static void check_finite(const float * p, size_t n, const std::string & name) {
    if (!all_finite(p, n)) throw numeric_error("non-finite values in tensor " + name);
}

void ModelWeights::validate_finite() const {
    check_finite(tok_embedding.data.data(), tok_embedding.size(), "tok_embedding");
    check_finite(pos_embedding.data.data(), pos_embedding.size(), "pos_embedding");
    for (size_t l = 0; l < layers.size(); l++) {
        const LayerWeights & lw = layers[l];
        const std::string tag = "layers." + std::to_string(l) + ".";
        check_finite(lw.attn_norm.data(), lw.attn_norm.size(), tag + "attn_norm");
        check_finite(lw.wq.data.data(), lw.wq.size(), tag + "wq");
        check_finite(lw.wk.data.data(), lw.wk.size(), tag + "wk");
        check_finite(lw.wv.data.data(), lw.wv.size(), tag + "wv");
        check_finite(lw.wo.data.data(), lw.wo.size(), tag + "wo");
        check_finite(lw.ffn_norm.data(), lw.ffn_norm.size(), tag + "ffn_norm");
        check_finite(lw.ffn_key.data.data(), lw.ffn_key.size(), tag + "ffn_key");
        if (lw.ffn_gate) check_finite(lw.ffn_gate->data.data(), lw.ffn_gate->size(), tag + "ffn_gate");
        check_finite(lw.ffn_value.data.data(), lw.ffn_value.size(), tag + "ffn_value");
    }
    check_finite(final_norm.data(), final_norm.size(), "final_norm");
    check_finite(unembedding.data.data(), unembedding.size(), "unembedding");
}

uint64_t ModelWeights::param_count() const {
    uint64_t n = tok_embedding.size() + pos_embedding.size();
    for (const LayerWeights & lw : layers) {
        n += lw.attn_norm.size() + lw.wq.size() + lw.wk.size() + lw.wv.size() + lw.wo.size();
        n += lw.ffn_norm.size() + lw.ffn_key.size() + lw.ffn_value.size();
        if (lw.ffn_gate) n += lw.ffn_gate->size();
    }
    n += final_norm.size() + unembedding.size();
    return n;
}

void ffn_forward(const float * x, const LayerWeights & layer, const ModelConfig & config,
                 float * y, float * coeffs, int layer_index) {
    const size_t d = static_cast<size_t>(config.d_model);
    const size_t m = static_cast<size_t>(config.ffn_dim);

    if (config.ffn_variant == FfnVariant::plain) {
        matvec(layer.ffn_key, x, coeffs);
        for (size_t i = 0; i < m; i++) {
            coeffs[i] = apply_activation(config.activation, coeffs[i]);
        }
    } else {
        // gated: c = f(x G^T) * (x K^T), ffn_key acts as the up projection
        std::vector<float> up(m);
        matvec(layer.ffn_key, x, up.data());
        matvec(*layer.ffn_gate, x, coeffs);
        for (size_t i = 0; i < m; i++) {
            coeffs[i] = apply_activation(config.activation, coeffs[i]) * up[i];
        }
    }

    // y = sum_i c_i v_i over knowledge-vector rows, 64-bit accumulation
    std::vector<double> acc(d, 0.0);
    for (size_t i = 0; i < m; i++) {
        axpy(acc.data(), static_cast<double>(coeffs[i]), layer.ffn_value.row(i), d);
    }
    for (size_t j = 0; j < d; j++) y[j] = static_cast<float>(acc[j]);

    if (!all_finite(y, d) || !all_finite(coeffs, m)) {
        throw numeric_error("non-finite FFN output at layer " +
                            (layer_index >= 0 ? std::to_string(layer_index) : std::string("?")));
    }
}

static void apply_norm(const float * x, const std::vector<float> & scale, NormKind kind, size_t d,
                       float * out) {
    constexpr double eps = 1e-5;
    if (kind == NormKind::rmsnorm) {
        double ss = 0.0;
        for (size_t i = 0; i < d; i++) ss += static_cast<double>(x[i]) * x[i];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        for (size_t i = 0; i < d; i++) out[i] = static_cast<float>(x[i] * inv) * scale[i];
    } else {
        double mean = 0.0;
        for (size_t i = 0; i < d; i++) mean += x[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t i = 0; i < d; i++) {
            const double c = x[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (size_t i = 0; i < d; i++) out[i] = static_cast<float>((x[i] - mean) * inv) * scale[i];
    }
}

ForwardTrace forward_with_trace(const ModelWeights & w, std::span<const int32_t> tokens) {
    const ModelConfig & cfg = w.config;
    const size_t seq = tokens.size();
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t m = static_cast<size_t>(cfg.ffn_dim);
    const size_t heads = static_cast<size_t>(cfg.num_heads);
    const size_t hd = d / heads;

    if (seq == 0) throw input_error("empty token sequence");
    if (seq > static_cast<size_t>(cfg.max_seq_len)) {
        throw input_error("sequence length " + std::to_string(seq) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    }
    for (size_t t = 0; t < seq; t++) {
        if (tokens[t] < 0 || tokens[t] >= cfg.vocab_size) {
            throw input_error("token id " + std::to_string(tokens[t]) + " out of range at position " +
                              std::to_string(t));
        }
    }

    // residual stream
    Matrix h(seq, d);
    for (size_t t = 0; t < seq; t++) {
        const float * te = w.tok_embedding.row(static_cast<size_t>(tokens[t]));
        const float * pe = w.pos_embedding.row(t);
        for (size_t j = 0; j < d; j++) h.at(t, j) = te[j] + pe[j];
    }

    ForwardTrace trace;
    trace.coeffs.reserve(w.layers.size());
    trace.ffn_in.reserve(w.layers.size());
    trace.ffn_out.reserve(w.layers.size());

    Matrix q(seq, d), k(seq, d), v(seq, d);
    std::vector<float> xn(d);

    for (size_t l = 0; l < w.layers.size(); l++) {
        const LayerWeights & lw = w.layers[l];

        // attention
        for (size_t t = 0; t < seq; t++) {
            apply_norm(h.row(t), lw.attn_norm, cfg.norm, d, xn.data());
            matvec(lw.wq, xn.data(), q.row(t));
            matvec(lw.wk, xn.data(), k.row(t));
            matvec(lw.wv, xn.data(), v.row(t));
        }
        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<double> ctx(d);
        std::vector<double> scores;
        for (size_t t = 0; t < seq; t++) {
            std::fill(ctx.begin(), ctx.end(), 0.0);
            for (size_t head = 0; head < heads; head++) {
                const size_t off = head * hd;
                scores.assign(t + 1, 0.0);
                double maxs = -1e300;
                for (size_t j = 0; j <= t; j++) {
                    scores[j] = dot(q.row(t) + off, k.row(j) + off, hd) * inv_sqrt_hd;
                    if (scores[j] > maxs) maxs = scores[j];
                }
                double z = 0.0;
                for (size_t j = 0; j <= t; j++) {
                    scores[j] = std::exp(scores[j] - maxs);
                    z += scores[j];
                }
                for (size_t j = 0; j <= t; j++) {
                    // weighted value sum per head; counted as (t+1)*hd MACs
                    axpy(ctx.data() + off, scores[j] / z, v.row(j) + off, hd);
                }
            }
            std::vector<float> ctx_f(d);
            for (size_t j = 0; j < d; j++) ctx_f[j] = static_cast<float>(ctx[j]);
            std::vector<float> attn_out(d);
            matvec(lw.wo, ctx_f.data(), attn_out.data());
            for (size_t j = 0; j < d; j++) h.at(t, j) += attn_out[j];
        }

        // FFN with coefficient capture
        Matrix layer_coeffs(seq, m);
        Matrix layer_in(seq, d);
        Matrix layer_ffn(seq, d);
        for (size_t t = 0; t < seq; t++) {
            apply_norm(h.row(t), lw.ffn_norm, cfg.norm, d, layer_in.row(t));
            ffn_forward(layer_in.row(t), lw, cfg, layer_ffn.row(t), layer_coeffs.row(t),
                        static_cast<int>(l));
            for (size_t j = 0; j < d; j++) h.at(t, j) += layer_ffn.at(t, j);
        }
        trace.coeffs.push_back(std::move(layer_coeffs));
        trace.ffn_in.push_back(std::move(layer_in));
        trace.ffn_out.push_back(std::move(layer_ffn));
    }

    trace.logits = Matrix(seq, static_cast<size_t>(cfg.vocab_size));
    for (size_t t = 0; t < seq; t++) {
        apply_norm(h.row(t), w.final_norm, cfg.norm, d, xn.data());
        matvec(w.unembedding, xn.data(), trace.logits.row(t));
    }
    if (!all_finite(trace.logits.data.data(), trace.logits.size())) {
        throw numeric_error("non-finite logits");
    }
    return trace;
}

int32_t greedy_next_token(const ModelWeights & w, std::span<const int32_t> tokens) {
    ForwardTrace trace = forward_with_trace(w, tokens);
    const float * last = trace.logits.row(tokens.size() - 1);
    int32_t best = 0;
    float best_v = last[0];
    for (int32_t i = 1; i < w.config.vocab_size; i++) {
        if (last[i] > best_v) {
            best_v = last[i];
            best = i;
        }
    }
    return best;
}

ModelWeights random_model(const ModelConfig & config, uint64_t seed, float scale) {
    config.validate();
    Rng rng(seed);
    auto fill_mat = [&](Matrix & mat, size_t r, size_t c) {
        mat = Matrix(r, c);
        for (float & f : mat.data) f = static_cast<float>(rng.normal()) * scale;
    };
    const size_t d = static_cast<size_t>(config.d_model);
    const size_t m = static_cast<size_t>(config.ffn_dim);

    ModelWeights w;
    w.config = config;
    fill_mat(w.tok_embedding, static_cast<size_t>(config.vocab_size), d);
    fill_mat(w.pos_embedding, static_cast<size_t>(config.max_seq_len), d);
    w.layers.resize(static_cast<size_t>(config.num_layers));
    for (LayerWeights & lw : w.layers) {
        lw.attn_norm.assign(d, 1.0f);
        fill_mat(lw.wq, d, d);
        fill_mat(lw.wk, d, d);
        fill_mat(lw.wv, d, d);
        fill_mat(lw.wo, d, d);
        lw.ffn_norm.assign(d, 1.0f);
        fill_mat(lw.ffn_key, m, d);
        if (config.ffn_variant == FfnVariant::gated) {
            lw.ffn_gate.emplace();
            fill_mat(*lw.ffn_gate, m, d);
        }
        fill_mat(lw.ffn_value, m, d);
    }
    w.final_norm.assign(d, 1.0f);
    fill_mat(w.unembedding, static_cast<size_t>(config.vocab_size), d);
    w.validate_shapes();
    return w;
}

}  // namespace kvw
