#pragma once

#include <stdexcept>
#include <string>

namespace kvw {

// Bad shapes, bad hyperparameters, bad layer ranges. CLI exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string & msg) : std::runtime_error(msg) {}
};

// Bad user-supplied data: out-of-range token ids, empty datasets,
// malformed or truncated files. CLI exit code 2.
struct input_error : std::runtime_error {
    explicit input_error(const std::string & msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected in a computation. CLI exit code 3.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string & msg) : std::runtime_error(msg) {}
};

}  // namespace kvw
