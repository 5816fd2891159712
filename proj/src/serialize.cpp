// Model container: line-oriented text header describing the config and a
// named tensor directory (name, shape, dtype, byte offset), a payload
// checksum, then the raw little-endian f32 payload. Round trips bit-exactly.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "kvw/errors.hpp"
#include "kvw/model.hpp"
#include "kvw/rng.hpp"

namespace kvw {

namespace {

constexpr const char * kMagic = "KVW-MODEL 1";

struct TensorRef {
    std::string name;
    std::vector<size_t> shape;
    const float * data;
    size_t count;
};

void collect_tensors(const ModelWeights & w, std::vector<TensorRef> & out) {
    auto add = [&](const std::string & name, const Matrix & m) {
        out.push_back({name, {m.rows, m.cols}, m.data.data(), m.size()});
    };
    auto add_vec = [&](const std::string & name, const std::vector<float> & v) {
        out.push_back({name, {v.size()}, v.data(), v.size()});
    };
    add("tok_embedding", w.tok_embedding);
    add("pos_embedding", w.pos_embedding);
    for (size_t l = 0; l < w.layers.size(); l++) {
        const LayerWeights & lw = w.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        add_vec(p + "attn_norm", lw.attn_norm);
        add(p + "wq", lw.wq);
        add(p + "wk", lw.wk);
        add(p + "wv", lw.wv);
        add(p + "wo", lw.wo);
        add_vec(p + "ffn_norm", lw.ffn_norm);
        add(p + "ffn_key", lw.ffn_key);
        if (lw.ffn_gate) add(p + "ffn_gate", *lw.ffn_gate);
        add(p + "ffn_value", lw.ffn_value);
    }
    add_vec("final_norm", w.final_norm);
    add("unembedding", w.unembedding);
}

uint64_t payload_checksum(const std::vector<TensorRef> & tensors) {
    Fnv1a64 h;
    for (const TensorRef & t : tensors) h.update(t.data, t.count * sizeof(float));
    return h.digest();
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void save_model(const ModelWeights & w, const std::string & path) {
    w.validate_shapes();
    w.validate_finite();

    std::vector<TensorRef> tensors;
    collect_tensors(w, tensors);

    std::ostringstream header;
    header << kMagic << "\n";
    const ModelConfig & c = w.config;
    header << "config num_layers " << c.num_layers << "\n";
    header << "config d_model " << c.d_model << "\n";
    header << "config ffn_dim " << c.ffn_dim << "\n";
    header << "config num_heads " << c.num_heads << "\n";
    header << "config vocab_size " << c.vocab_size << "\n";
    header << "config max_seq_len " << c.max_seq_len << "\n";
    header << "config activation " << to_string(c.activation) << "\n";
    header << "config ffn_variant " << to_string(c.ffn_variant) << "\n";
    header << "config norm " << to_string(c.norm) << "\n";

    size_t offset = 0;
    for (const TensorRef & t : tensors) {
        header << "tensor " << t.name << " f32";
        for (size_t dim : t.shape) header << " " << dim;
        header << " @" << offset << "\n";
        offset += t.count * sizeof(float);
    }
    header << "checksum fnv1a64 " << hex64(payload_checksum(tensors)) << "\n";
    header << "data " << offset << "\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw input_error("cannot open for writing: " + path);
    const std::string hs = header.str();
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const TensorRef & t : tensors) {
        f.write(reinterpret_cast<const char *>(t.data),
                static_cast<std::streamsize>(t.count * sizeof(float)));
    }
    if (!f) throw input_error("write failed: " + path);
}

ModelWeights load_model(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw input_error("cannot open model file: " + path);

    std::string line;
    if (!std::getline(f, line) || line != kMagic) {
        throw input_error("not a model container (bad magic): " + path);
    }

    ModelConfig cfg;
    struct Entry {
        std::string name;
        std::vector<size_t> shape;
        size_t offset;
        size_t count;
    };
    std::vector<Entry> entries;
    uint64_t declared_checksum = 0;
    bool have_checksum = false;
    size_t payload_bytes = 0;

    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "config") {
            std::string key, value;
            ls >> key >> value;
            if (key == "num_layers") cfg.num_layers = std::stoi(value);
            else if (key == "d_model") cfg.d_model = std::stoi(value);
            else if (key == "ffn_dim") cfg.ffn_dim = std::stoi(value);
            else if (key == "num_heads") cfg.num_heads = std::stoi(value);
            else if (key == "vocab_size") cfg.vocab_size = std::stoi(value);
            else if (key == "max_seq_len") cfg.max_seq_len = std::stoi(value);
            else if (key == "activation") cfg.activation = activation_from_string(value);
            else if (key == "ffn_variant") cfg.ffn_variant = ffn_variant_from_string(value);
            else if (key == "norm") cfg.norm = norm_from_string(value);
            else throw input_error("unknown config key in model header: " + key);
        } else if (kind == "tensor") {
            Entry e;
            std::string dtype;
            ls >> e.name >> dtype;
            if (dtype != "f32") throw input_error("unsupported dtype " + dtype + " for tensor " + e.name);
            std::string tok;
            e.offset = 0;
            e.count = 1;
            e.shape.clear();
            while (ls >> tok) {
                if (tok[0] == '@') {
                    e.offset = std::stoull(tok.substr(1));
                } else {
                    e.shape.push_back(std::stoull(tok));
                }
            }
            e.count = 1;
            for (size_t dim : e.shape) e.count *= dim;
            entries.push_back(std::move(e));
        } else if (kind == "checksum") {
            std::string algo, hexv;
            ls >> algo >> hexv;
            if (algo != "fnv1a64") throw input_error("unknown checksum algorithm: " + algo);
            declared_checksum = std::stoull(hexv, nullptr, 16);
            have_checksum = true;
        } else if (kind == "data") {
            ls >> payload_bytes;
            break;
        } else {
            throw input_error("unknown header line in model container: " + line);
        }
    }

    std::vector<char> payload(payload_bytes);
    f.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<size_t>(f.gcount()) != payload_bytes) {
        throw input_error("corrupt model file (truncated payload): " + path);
    }

    if (have_checksum) {
        Fnv1a64 h;
        h.update(payload.data(), payload.size());
        if (h.digest() != declared_checksum) {
            throw input_error("corrupt model file (checksum mismatch): " + path);
        }
    }

    auto fetch = [&](const Entry & e) {
        if (e.offset + e.count * sizeof(float) > payload.size()) {
            throw input_error("corrupt model file: tensor " + e.name + " extends past payload");
        }
        std::vector<float> out(e.count);
        std::memcpy(out.data(), payload.data() + e.offset, e.count * sizeof(float));
        return out;
    };
    auto find = [&](const std::string & name) -> const Entry & {
        for (const Entry & e : entries) {
            if (e.name == name) return e;
        }
        throw input_error("corrupt model file: missing tensor " + name);
    };
    auto load_mat = [&](const std::string & name, size_t rows, size_t cols) {
        const Entry & e = find(name);
        if (e.shape.size() != 2 || e.shape[0] != rows || e.shape[1] != cols) {
            throw input_error("corrupt model file: tensor " + name + " has unexpected shape");
        }
        Matrix mat(rows, cols);
        mat.data = fetch(e);
        return mat;
    };
    auto load_vec = [&](const std::string & name, size_t n) {
        const Entry & e = find(name);
        if (e.shape.size() != 1 || e.shape[0] != n) {
            throw input_error("corrupt model file: tensor " + name + " has unexpected shape");
        }
        return fetch(e);
    };

    cfg.validate();
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t m = static_cast<size_t>(cfg.ffn_dim);

    ModelWeights w;
    w.config = cfg;
    w.tok_embedding = load_mat("tok_embedding", static_cast<size_t>(cfg.vocab_size), d);
    w.pos_embedding = load_mat("pos_embedding", static_cast<size_t>(cfg.max_seq_len), d);
    w.layers.resize(static_cast<size_t>(cfg.num_layers));
    for (size_t l = 0; l < w.layers.size(); l++) {
        LayerWeights & lw = w.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        lw.attn_norm = load_vec(p + "attn_norm", d);
        lw.wq = load_mat(p + "wq", d, d);
        lw.wk = load_mat(p + "wk", d, d);
        lw.wv = load_mat(p + "wv", d, d);
        lw.wo = load_mat(p + "wo", d, d);
        lw.ffn_norm = load_vec(p + "ffn_norm", d);
        lw.ffn_key = load_mat(p + "ffn_key", m, d);
        if (cfg.ffn_variant == FfnVariant::gated) {
            lw.ffn_gate = load_mat(p + "ffn_gate", m, d);
        }
        lw.ffn_value = load_mat(p + "ffn_value", m, d);
    }
    w.final_norm = load_vec("final_norm", d);
    w.unembedding = load_mat("unembedding", static_cast<size_t>(cfg.vocab_size), d);

    w.validate_shapes();
    w.validate_finite();
    return w;
}

}  // namespace kvw
