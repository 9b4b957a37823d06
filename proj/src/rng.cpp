#include "rng.hpp"

#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace squidlet {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) throw DivisionError("uniform_int: n must be >= 1");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::gauss(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + spare_ * stddev;
    }
    const double two_pi = 6.283185307179586476925286766559;
    const double angle = uniform() * two_pi;
    const double radius = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    spare_ = std::sin(angle) * radius;
    has_spare_ = true;
    return mean + std::cos(angle) * radius * stddev;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << s_[0] << ' ' << s_[1] << ' ' << s_[2] << ' ' << s_[3] << ' '
       << (has_spare_ ? 1 : 0);
    if (has_spare_) {
        os << ' ';
        os.precision(17);
        os << spare_;
    }
    return os.str();
}

Rng Rng::deserialize(const std::string& text) {
    std::istringstream is(text);
    Rng r;
    int spare_flag = 0;
    if (!(is >> r.s_[0] >> r.s_[1] >> r.s_[2] >> r.s_[3] >> spare_flag)) {
        throw ParseError("rng state: malformed text");
    }
    r.has_spare_ = spare_flag != 0;
    if (r.has_spare_ && !(is >> r.spare_)) {
        throw ParseError("rng state: missing spare value");
    }
    return r;
}

bool Rng::operator==(const Rng& other) const {
    for (int i = 0; i < 4; ++i) {
        if (s_[i] != other.s_[i]) return false;
    }
    if (has_spare_ != other.has_spare_) return false;
    return !has_spare_ || spare_ == other.spare_;
}

uint64_t mix_seed(uint64_t seed, uint64_t label) {
    uint64_t x = seed ^ (label * 0x9e3779b97f4a7c15ULL);
    return splitmix64(x);
}

uint64_t mix_seed(uint64_t seed, uint64_t label, uint64_t a) {
    uint64_t x = mix_seed(seed, label) ^ (a + 0x632be59bd9b4e019ULL);
    return splitmix64(x);
}

uint64_t mix_seed(uint64_t seed, uint64_t label, uint64_t a, uint64_t b) {
    uint64_t x = mix_seed(seed, label, a) ^ (b + 0x9e6c63d0876a9a47ULL);
    return splitmix64(x);
}

} // namespace squidlet
