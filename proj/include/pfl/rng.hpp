#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace pfl {

// splitmix64 finalizer; used for seed derivation so that sub-streams
// (per client, per round, per epoch) are independent of call order.
uint64_t mix64(uint64_t x);
uint64_t hash_seed(uint64_t a, uint64_t b);
uint64_t hash_seed(uint64_t a, uint64_t b, uint64_t c);

// Deterministic RNG with hand-rolled distributions. std:: distributions are
// implementation-defined, and frozen golden values in tests must not depend
// on the standard library build.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    double normal();                        // standard normal, Box-Muller
    double gamma(double alpha);             // shape alpha, scale 1
    int uniform_int(int n);                 // [0, n), unbiased

    std::vector<double> dirichlet(double alpha, int n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

private:
    uint64_t state_[4];
    uint64_t next_raw();
};

// k ids sampled uniformly without replacement from [0, n), returned sorted.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

// FNV-1a over the raw bytes of a double vector; round-record checksums.
uint64_t checksum(const std::vector<double>& v);

} // namespace pfl
