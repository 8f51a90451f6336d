#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace exbench::detail {

// Thin wrapper around std::mt19937_64 with hand-rolled draws. The standard
// distributions are implementation-defined, so every stochastic component in
// the project goes through this wrapper to keep results bit-identical across
// compilers and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return u01() < p; }

    // Uniform index in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(u01() * static_cast<double>(n));
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    double normal(double mean = 0.0, double sd = 1.0) {
        // Box-Muller; keeps one spare value.
        if (has_spare_) {
            has_spare_ = false;
            return mean + sd * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = u01();
        } while (u1 <= 0.0);
        double u2 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + sd * r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Deterministic sample of k distinct positions from [0, n), ascending.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k >= n) {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            return all;
        }
        // Floyd's algorithm; result sorted afterwards for a canonical order.
        std::vector<std::size_t> picked;
        picked.reserve(k);
        for (std::size_t j = n - k; j < n; ++j) {
            std::size_t t = uniform_index(j + 1);
            bool seen = false;
            for (std::size_t p : picked) {
                if (p == t) {
                    seen = true;
                    break;
                }
            }
            picked.push_back(seen ? j : t);
        }
        std::sort(picked.begin(), picked.end());
        return picked;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace exbench::detail
