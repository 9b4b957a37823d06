#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace squidlet {

// Deterministic RNG with a self-contained distribution layer.
// std::*_distribution is implementation-defined, so uniform/gauss are done
// by hand on top of a splitmix64-seeded xoshiro256** core. State serializes
// to text for checkpoints.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // [0, 1), 53-bit resolution
    double uniform();
    double uniform(double lo, double hi);

    // [0, n), rejection sampled, n >= 1
    uint64_t uniform_int(uint64_t n);

    // Box-Muller with cached spare
    double gauss(double mean, double stddev);

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    std::string serialize() const;
    static Rng deserialize(const std::string& text);

    bool operator==(const Rng& other) const;

private:
    uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable mixing of stream labels into derived seeds, so per-step randomness
// is a pure function of (seed, label, indices) and survives checkpoint resume.
uint64_t mix_seed(uint64_t seed, uint64_t label);
uint64_t mix_seed(uint64_t seed, uint64_t label, uint64_t a);
uint64_t mix_seed(uint64_t seed, uint64_t label, uint64_t a, uint64_t b);

} // namespace squidlet
