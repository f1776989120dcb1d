#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ieqn {

/// Deterministic 64-bit random generator used everywhere in the project.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard, so runs reproduce bit-exactly across platforms and compilers.
/// The standard library *distributions* are implementation-defined and are
/// deliberately not used; uniform doubles and gaussians are produced here
/// with fixed algorithms:
///   - next_double(): top 53 bits of the engine output, (x >> 11) * 2^-53,
///     uniform on [0, 1).
///   - next_gaussian(): Box-Muller on two fresh draws (no cached spare).
/// Substream seeds come from SplitMix64 over (seed, stream), so independent
/// components of a run never share a stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1); never returns 0 (safe as a log argument).
    double next_open_double() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller, two engine draws per call.
    double next_gaussian() {
        const double u1 = next_open_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi_ * u2);
    }

    /// Uniform index in [0, n) via 128-bit multiply-shift (no modulo bias
    /// worth caring about at 64 bits, and branch-free deterministic).
    std::size_t next_index(std::size_t n) {
        const unsigned __int128 wide =
            static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n);
        return static_cast<std::size_t>(wide >> 64);
    }

    /// SplitMix64 step; maps (seed, stream) to an independent substream seed.
    static std::uint64_t split(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// FNV-1a over a label, for naming substreams ("env", "z-init", ...).
    static std::uint64_t hash_tag(std::string_view tag) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    static std::uint64_t split_tag(std::uint64_t seed, std::string_view tag) {
        return split(seed, hash_tag(tag));
    }

private:
    static constexpr double pi_ = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

}  // namespace ieqn
