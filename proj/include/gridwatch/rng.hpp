#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gridwatch::rng {

// Deterministic xoshiro256++ generator. All randomness in the project flows
// through this class so that runs are bit-identical across platforms and
// standard library versions (std::*_distribution is implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller; one spare value is cached.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    // k distinct values from [0, n), ascending order.
    std::vector<int> sample_without_replacement(int n, int k);

    // Gamma(shape) with unit scale (Marsaglia-Tsang; boosted for shape < 1).
    double gamma(double shape);

    // Symmetric Dirichlet of dimension k with concentration alpha.
    std::vector<double> dirichlet(int k, double alpha);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable substream derivation: FNV-1a over the tag folded into the master
// seed, then finalized. Changing one stage's tag or index never perturbs
// another stage's stream.
std::uint64_t derive(std::uint64_t master, std::string_view tag);
std::uint64_t derive(std::uint64_t master, std::string_view tag, std::uint64_t index);

// FNV-1a 64-bit over a byte string; also used for config/artifact hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ull);

}  // namespace gridwatch::rng
