#pragma once

#include <cmath>
#include <cstdint>

namespace kvw {

// Deterministic generator (splitmix64). std::mt19937 + std::normal_distribution
// are implementation-defined, which would break frozen expected values and
// byte-identical reruns across toolchains, so we own the whole stream.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // derive an independent stream (hashing the label into the state)
    Rng fork(uint64_t label) {
        uint64_t s = next_u64();
        return Rng(s ^ (label * 0x9e3779b97f4a7c15ULL));
    }

  private:
    uint64_t state_;
};

// FNV-1a 64-bit, used for dataset/order hashes embedded in reports.
class Fnv1a64 {
  public:
    void update(const void * data, size_t len) {
        const auto * p = static_cast<const unsigned char *>(data);
        for (size_t i = 0; i < len; i++) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }

    void update_u64(uint64_t v) {
        unsigned char buf[8];
        for (int i = 0; i < 8; i++) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        update(buf, 8);
    }

    uint64_t digest() const { return hash_; }

  private:
    uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace kvw
