#include "gridwatch/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gridwatch::rng {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be > 0");
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: bad k");
    // Floyd's algorithm keeps cost O(k) regardless of n.
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = n - k; j < n; ++j) {
        int t = static_cast<int>(uniform_int(static_cast<std::uint64_t>(j) + 1));
        if (taken[static_cast<std::size_t>(t)]) t = j;
        taken[static_cast<std::size_t>(t)] = true;
        out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
        // Gamma(a) = Gamma(a+1) * U^{1/a}
        const double u = std::max(uniform01(), 1e-300);
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> Rng::dirichlet(int k, double alpha) {
    std::vector<double> w(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& wi : w) {
        wi = gamma(alpha);
        sum += wi;
    }
    if (sum <= 0.0) sum = 1.0;
    for (auto& wi : w) wi /= sum;
    return w;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t derive(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = fnv1a(tag, 0xcbf29ce484222325ull ^ master);
    // splitmix finalizer decorrelates adjacent masters
    std::uint64_t s = h;
    return splitmix64(s);
}

std::uint64_t derive(std::uint64_t master, std::string_view tag, std::uint64_t index) {
    std::uint64_t h = derive(master, tag);
    std::uint64_t s = h ^ (0x9e3779b97f4a7c15ull * (index + 1));
    return splitmix64(s);
}

}  // namespace gridwatch::rng
