// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsasan {

// ---------------------------------------------------------------------------
// Error taxonomy. Every module throws one of these; the CLI maps them to
// exit codes (usage=1, data=2, numeric=3).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };        // dimension mismatch
struct ConfigError : Error { using Error::Error; };       // invalid configuration
struct IndexError : Error { using Error::Error; };        // out-of-range access
struct TrainingError : Error { using Error::Error; };     // optimizer/loss failures
struct SimulationError : Error { using Error::Error; };   // integrator divergence
struct DataError : Error { using Error::Error; };         // dataset assembly
struct ParseError : Error { using Error::Error; };        // malformed input files
struct GenerationError : Error { using Error::Error; };   // sample generation
struct InferenceError : Error { using Error::Error; };    // non-finite activations
struct IoError : Error { using Error::Error; };           // filesystem
struct UsageError : Error { using Error::Error; };        // bad CLI arguments

// ---------------------------------------------------------------------------
// Deterministic random source. mt19937_64 has a standard-specified sequence;
// the distributions below are hand-rolled because the std:: distribution
// objects are allowed to differ between standard libraries and every draw in
// this project must be reproducible from a seed alone.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stable seed derivation from a base seed and a textual tag.
inline uint64_t splitmix64_mix(uint64_t base, const std::string& tag) {
    uint64_t s = base;
    splitmix64(s);
    uint64_t x = s ^ fnv1a(tag);
    return splitmix64(x);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Independent substream: mixes the base seed with a stream tag so that
    // e.g. process noise and measurement noise never share draws.
    static Rng derive(uint64_t seed, uint64_t stream) {
        uint64_t s = seed ^ 0xa076'1d64'78bd'642fULL;
        splitmix64(s);
        s ^= stream * 0xe703'7ed1'a0b4'28dbULL;
        return Rng(splitmix64(s));
    }

    static Rng derive(uint64_t seed, const std::string& stream) {
        return derive(seed, fnv1a(stream));
    }

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, no caching (two draws per call keeps the stream position
    // a pure function of call count).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Beta(k, k) drawn as the k-th order statistic of 2k-1 uniforms.
    double beta_symmetric(int k) {
        if (k < 1) throw ConfigError("beta_symmetric: k must be >= 1");
        const int n = 2 * k - 1;
        std::vector<double> u(static_cast<size_t>(n));
        for (auto& v : u) v = uniform();
        std::nth_element(u.begin(), u.begin() + (k - 1), u.end());
        return u[static_cast<size_t>(k - 1)];
    }

    size_t index(size_t n) {
        if (n == 0) throw IndexError("Rng::index: empty range");
        return static_cast<size_t>(next_u64() % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Small helpers shared across modules.
// ---------------------------------------------------------------------------

// Shortest decimal text that round-trips an IEEE double (17 significant digits).
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// Dense row-major matrix. Deliberately minimal; the differentiable Tensor
// type lives in tensor.hpp, this one is for plain data plumbing.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    bool empty() const { return data.empty(); }
};

}  // namespace tsasan
