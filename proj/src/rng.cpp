#include "langsteer/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace langsteer {

std::uint64_t splitmix64(std::uint64_t x) {
    std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis) {
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), basis);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                          std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(root ^ fnv1a64(purpose));
    for (std::uint64_t k : keys) h = splitmix64(h ^ k);
    return h;
}

std::uint64_t bounded(std::uint64_t x, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * n) >> 64);
}

double KeyedRng::uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double KeyedRng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    KeyedRng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace langsteer
