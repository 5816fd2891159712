#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kvw/errors.hpp"

namespace kvw {

// Running count of multiply-accumulate operations performed by the matmul
// kernels below. The cost model's symbolic forward formulas are checked
// against this counter with exact integer equality, so every counted MAC
// must flow through dot()/axpy()/matvec(). Element-wise work (norms,
// softmax, residual adds, gate scaling) is intentionally not counted.
// Single-threaded engine; plain globals are fine.
namespace macs {
void     reset();
void     add(uint64_t n);
uint64_t total();
}  // namespace macs

// Dense row-major f32 matrix. Rows are the semantic unit everywhere in this
// codebase (FFN keys and knowledge vectors are rows).
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float &       at(size_t r, size_t c) { return data[r * cols + c]; }
    const float & at(size_t r, size_t c) const { return data[r * cols + c]; }

    float *       row(size_t r) { return data.data() + r * cols; }
    const float * row(size_t r) const { return data.data() + r * cols; }

    size_t size() const { return data.size(); }
};

// dot product with 64-bit accumulation; counts n MACs
double dot(const float * a, const float * b, size_t n);

// acc[i] += w * v[i] into a double accumulator; counts n MACs
void axpy(double * acc, double w, const float * v, size_t n);

// y = M x, rows of M against x; counts rows*cols MACs
void matvec(const Matrix & m, const float * x, float * y);

bool all_finite(const float * p, size_t n);

}  // namespace kvw
