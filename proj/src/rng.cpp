#include "pfl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pfl {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t hash_seed(uint64_t a, uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ull));
}

uint64_t hash_seed(uint64_t a, uint64_t b, uint64_t c) {
    return hash_seed(hash_seed(a, b), c);
}

Rng::Rng(uint64_t seed) {
    // xoshiro256** state seeded via splitmix64
    uint64_t s = seed;
    for (auto& w : state_) {
        s += 0x9e3779b97f4a7c15ull;
        w = mix64(s);
    }
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_raw() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

uint64_t Rng::next_u64() { return next_raw(); }

double Rng::uniform() {
    return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // Box-Muller, cosine branch only; keeps the draw count per call fixed.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be > 0");
    if (alpha < 1.0) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    // Marsaglia-Tsang squeeze
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be > 0");
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r = next_raw();
    while (r >= limit) r = next_raw();
    return static_cast<int>(r % bound);
}

std::vector<double> Rng::dirichlet(double alpha, int n) {
    std::vector<double> g(static_cast<size_t>(n));
    double sum = 0.0;
    for (auto& v : g) {
        v = gamma(alpha);
        sum += v;
    }
    if (sum <= 0.0) {
        // all-zero draw is theoretically impossible but guard the division
        for (auto& v : g) v = 1.0 / n;
        return g;
    }
    for (auto& v : g) v /= sum;
    return g;
}

std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<int> ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        int j = i + rng.uniform_int(n - i);
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
    }
    ids.resize(static_cast<size_t>(k));
    std::sort(ids.begin(), ids.end());
    return ids;
}

uint64_t checksum(const std::vector<double>& v) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (double d : v) {
        uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffull;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

} // namespace pfl
