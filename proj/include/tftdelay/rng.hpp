#pragma once

// Seeded random streams. Sub-seeds are derived from a base seed and a label
// by hashing, so each consumer (weather, demand, noise, init, dropout, ...)
// owns an independent stream and toggling one leaves the others unchanged.

#include <cstdint>
#include <random>
#include <string_view>

namespace tftdelay {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a of the label, folded into the base seed through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(base ^ mix64(h));
}

inline Rng make_rng(std::uint64_t base, std::string_view label) { return Rng(derive_seed(base, label)); }

}  // namespace tftdelay
