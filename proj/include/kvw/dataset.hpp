#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvw/config.hpp"

namespace kvw {

// One teacher-forced example: token ids plus a mask flagging the positions
// that belong to the gold answer span.
struct TokenExample {
    std::vector<int32_t> tokens;
    std::vector<uint8_t> answer_mask;  // same length; nonzero = answer position

    // lengths equal, ids within vocab, length within max_seq_len
    void validate(const ModelConfig & config) const;

    size_t answer_count() const;
};

using Dataset = std::vector<TokenExample>;

// JSON-lines, one example per line:
//   {"tokens": [int...], "answer_start": int, "answer_end": int}
// with the answer span half-open [start, end).
Dataset load_dataset(const std::string & path);
void    save_dataset(const Dataset & examples, const std::string & path);

// order-sensitive content hash, embedded in caches and run reports
uint64_t dataset_hash(const Dataset & examples);

}  // namespace kvw
