#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace oos {

// splitmix64, used for seeding and stream derivation.
inline uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic xoshiro256++ generator. Identical output for identical
/// seeds on every platform; all sampling in the toolkit goes through it.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& s : state_) s = splitmix64_next(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n), n > 0. Rejection sampling.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derives a child stream seed. Chains so that
    /// derive(derive(seed, a), b) gives independent per-(a,b) streams.
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        uint64_t s = seed ^ (0xd1342543de82ef95ULL * (stream + 1));
        (void)splitmix64_next(s);
        return splitmix64_next(s);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

// Fixed stream tags so independent consumers of one run seed never collide.
namespace stream {
constexpr uint64_t kClassChoice = 1;
constexpr uint64_t kExampleSplit = 2;
constexpr uint64_t kWeightInit = 3;
constexpr uint64_t kEpochShuffle = 4;
constexpr uint64_t kBatchOutliers = 5;
constexpr uint64_t kValidation = 6;
constexpr uint64_t kEncoderInit = 7;
constexpr uint64_t kCalibration = 8;
constexpr uint64_t kPoolSample = 9;
}  // namespace stream

}  // namespace oos
