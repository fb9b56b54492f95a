#ifndef LOWTHRUST_RNG_HPP
#define LOWTHRUST_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace lowthrust {

// All randomness in the pipeline flows from one global seed through named
// substreams, so each stage (multistart, perturbations, shuffling, regions)
// is independently reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Substream engine derived from (seed, name) and an optional index such as
// a trajectory id.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(seed ^ fnv1a(name));
    s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return std::mt19937_64(s);
}

}  // namespace lowthrust

#endif
