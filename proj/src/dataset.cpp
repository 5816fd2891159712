#include "kvw/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "kvw/errors.hpp"
#include "kvw/rng.hpp"

namespace kvw {

using nlohmann::json;

void TokenExample::validate(const ModelConfig & config) const {
    if (tokens.empty()) throw input_error("example has no tokens");
    if (tokens.size() != answer_mask.size()) {
        throw input_error("answer_mask length does not match token count");
    }
    if (tokens.size() > static_cast<size_t>(config.max_seq_len)) {
        throw input_error("example length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
    }
    for (int32_t id : tokens) {
        if (id < 0 || id >= config.vocab_size) {
            throw input_error("token id " + std::to_string(id) + " out of vocabulary");
        }
    }
}

size_t TokenExample::answer_count() const {
    size_t n = 0;
    for (uint8_t b : answer_mask) n += (b != 0);
    return n;
}

Dataset load_dataset(const std::string & path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open dataset: " + path);

    Dataset out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception & e) {
            throw input_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        if (!j.contains("tokens") || !j["tokens"].is_array()) {
            throw input_error(path + ":" + std::to_string(lineno) + ": missing tokens array");
        }
        TokenExample ex;
        ex.tokens = j["tokens"].get<std::vector<int32_t>>();
        const auto start = j.value("answer_start", 0);
        const auto end = j.value("answer_end", 0);
        if (start < 0 || end < start || static_cast<size_t>(end) > ex.tokens.size()) {
            throw input_error(path + ":" + std::to_string(lineno) + ": bad answer span [" +
                              std::to_string(start) + "," + std::to_string(end) + ")");
        }
        ex.answer_mask.assign(ex.tokens.size(), 0);
        for (int i = start; i < end; i++) ex.answer_mask[static_cast<size_t>(i)] = 1;
        out.push_back(std::move(ex));
    }
    return out;
}

void save_dataset(const Dataset & examples, const std::string & path) {
    std::ofstream f(path);
    if (!f) throw input_error("cannot open for writing: " + path);
    for (const TokenExample & ex : examples) {
        // the JSONL schema carries a contiguous span, not an arbitrary mask
        size_t start = ex.tokens.size(), end = 0;
        for (size_t i = 0; i < ex.answer_mask.size(); i++) {
            if (ex.answer_mask[i]) {
                if (i < start) start = i;
                end = i + 1;
            }
        }
        if (start == ex.tokens.size()) {
            start = 0;
            end = 0;
        }
        for (size_t i = start; i < end; i++) {
            if (!ex.answer_mask[i]) throw input_error("answer mask is not a contiguous span");
        }
        json j;
        j["tokens"] = ex.tokens;
        j["answer_start"] = start;
        j["answer_end"] = end;
        f << j.dump() << "\n";
    }
    if (!f) throw input_error("write failed: " + path);
}

uint64_t dataset_hash(const Dataset & examples) {
    Fnv1a64 h;
    for (const TokenExample & ex : examples) {
        h.update_u64(ex.tokens.size());
        for (int32_t t : ex.tokens) h.update_u64(static_cast<uint64_t>(static_cast<uint32_t>(t)));
        for (uint8_t b : ex.answer_mask) h.update(&b, 1);
    }
    return h.digest();
}

}  // namespace kvw
