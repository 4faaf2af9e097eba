#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace langsteer {

// All randomness in the project is derived from a root seed through
// purpose-keyed derivation; there is no global generator.

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Seed for the stream identified by (root, purpose, keys...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                          std::initializer_list<std::uint64_t> keys = {});

// Maps a uniform 64-bit value onto [0, n) by multiply-high.
std::uint64_t bounded(std::uint64_t x, std::uint64_t n);

// Small counter-based generator; satisfies UniformRandomBitGenerator.
class KeyedRng {
public:
    using result_type = std::uint64_t;
    explicit KeyedRng(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return splitmix64(state_++); }

    std::uint64_t below(std::uint64_t n) { return bounded((*this)(), n); }
    // Uniform in [0, 1) with 53 bits.
    double uniform();
    // Standard normal via Box-Muller; platform independent.
    double normal();

private:
    std::uint64_t state_;
};

// Fisher-Yates permutation of [0, n) driven by `seed`.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

std::string hex64(std::uint64_t value);

}  // namespace langsteer
