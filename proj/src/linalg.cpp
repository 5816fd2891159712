#include "kvw/linalg.hpp"

#include <cmath>

namespace kvw {

namespace macs {

static uint64_t g_total = 0;

void     reset() { g_total = 0; }
void     add(uint64_t n) { g_total += n; }
uint64_t total() { return g_total; }

}  // namespace macs

double dot(const float * a, const float * b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; i++) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    macs::add(n);
    return acc;
}

void axpy(double * acc, double w, const float * v, size_t n) {
    for (size_t i = 0; i < n; i++) {
        acc[i] += w * static_cast<double>(v[i]);
    }
    macs::add(n);
}

void matvec(const Matrix & m, const float * x, float * y) {
    for (size_t r = 0; r < m.rows; r++) {
        y[r] = static_cast<float>(dot(m.row(r), x, m.cols));
    }
}

bool all_finite(const float * p, size_t n) {
    for (size_t i = 0; i < n; i++) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

}  // namespace kvw
