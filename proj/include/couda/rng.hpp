#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace couda {

// Derives a child seed from a root seed and a stream name so that every
// consumer of randomness (peer init, batching, data generation, ...) gets an
// independent deterministic stream from one user-facing seed.
std::uint64_t sub_seed(std::uint64_t root, std::string_view stream);

// Thin wrapper over mt19937_64 with hand-rolled draws. The standard
// distributions are implementation-defined, which would break bit-identical
// runs across toolchains, so we only take raw 64-bit words from the engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform double in [0, 1).
    double uniform();

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller. Draws two uniforms per call.
    double normal();

    // Uniform integer in [0, n). Rejection sampling, n > 0.
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace couda
