#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace recon {

/// Model construction or validation failed (bad transition rows, schema
/// mismatches, inconsistent instances).
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside the operation's contract.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Instance file could not be parsed; carries 1-based line/column.
struct ParseError : std::runtime_error {
    ParseError(int line, int column, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", col " +
                             std::to_string(column) + ": " + what),
          line(line),
          column(column) {}
    int line;
    int column;
};

/// FNV-1a over a span of ints; used to key joint states and factored tuples.
struct IntVecHash {
    std::size_t operator()(const std::vector<int>& v) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (int x : v) {
            auto u = static_cast<std::uint32_t>(x);
            for (int i = 0; i < 4; ++i) {
                h ^= (u >> (8 * i)) & 0xffu;
                h *= 1099511628211ull;
            }
        }
        return static_cast<std::size_t>(h);
    }
};

/// Splitmix64 step; stretches a (seed, index) pair into an independent
/// generator seed so episodes can be reordered or parallelized.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Fixed-width float formatting for CSV output. Deterministic for identical
/// doubles, round-trippable at %.12g.
std::string format_double(double x);

}  // namespace recon
