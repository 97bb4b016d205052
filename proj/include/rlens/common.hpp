#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlens {

// Error categories map to CLI exit codes: validation=2, numeric=3, io=4.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Stable 64-bit FNV-1a, used for sub-seed derivation and manifest hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 14695981039346656037ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 14695981039346656037ULL) {
    return fnv1a(s.data(), s.size(), h);
}

// Named sub-seed: every stochastic consumer hashes its role name into the
// run seed so adding a consumer never shifts another one's stream.
inline std::uint64_t sub_seed(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = fnv1a(name);
    h = fnv1a(&seed, sizeof(seed), h);
    return h;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace rlens
