#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace ecoinc {

// SplitMix64 finalizer; used to turn (seed, domain, index) into stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent random streams are keyed by what they drive, so the same pulse
// index never reuses numbers across the emission, jitter and counting stages.
enum class StreamDomain : std::uint64_t {
    pulse = 1,
    pair = 2,
    counting = 3,
    dip_map = 4,
    train_block = 5,
    test = 99,
};

constexpr std::uint64_t stream_key(std::uint64_t seed, StreamDomain domain, std::uint64_t index) {
    return mix64(mix64(seed ^ (static_cast<std::uint64_t>(domain) << 56)) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// xoshiro256** generator; satisfies UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t key) {
        std::uint64_t s = key;
        for (auto& word : state_) {
            s += 0x9e3779b97f4a7c15ULL;
            word = mix64(s);
        }
    }

    Rng(std::uint64_t seed, StreamDomain domain, std::uint64_t index)
        : Rng(stream_key(seed, domain, index)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

// Maps a 64-bit key straight to [0, 1) without building a stream.
constexpr double key_to_unit(std::uint64_t key) { return static_cast<double>(key >> 11) * 0x1.0p-53; }

}  // namespace ecoinc
