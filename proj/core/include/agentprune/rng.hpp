#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace agentprune {

/// Seeded random source threaded explicitly through every stochastic call.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The draws below are computed from raw engine output rather than
/// std::*_distribution so results are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a list of tags (query index, round, agent id, ...)
/// into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace agentprune
