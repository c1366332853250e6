#pragma once

#include <cstdint>
#include <random>

namespace tsc {

// Portable seeded generator. std::mt19937_64's output sequence is fixed by the
// standard; the distributions below are implemented here because the standard
// library's distributions are not bit-identical across implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Unbiased (rejection on the top of the range).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Sub-seed for an independent stream of a master seed:
// mix64(master + 0x9e3779b97f4a7c15 * (stream + 1)).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

namespace seed_stream {
inline constexpr std::uint64_t demand = 1;
inline constexpr std::uint64_t exploration = 2;
inline constexpr std::uint64_t sampling = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t repeat_base = 100;
} // namespace seed_stream

} // namespace tsc
