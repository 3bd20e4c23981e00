#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace pdt {

/// Seeded generator with hand-pinned draw paths so identical seeds give
/// bit-identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
        const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    // Box-Muller
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::vector<double> normal_vec(std::size_t n, double stddev) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(0.0, stddev);
        return v;
    }

    // index draw from unnormalized non-negative weights
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
            total += w;
        }
        if (total <= 0.0) throw std::invalid_argument("categorical: all weights zero");
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(gen_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent child stream (stable derivation from the parent state).
    Rng fork() { return Rng(gen_() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 gen_;
};

}  // namespace pdt
