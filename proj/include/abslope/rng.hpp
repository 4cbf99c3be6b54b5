#pragma once

// Random number generation. Every draw in the library flows from a single
// master seed through mt19937_64; the distributions are hand-rolled so that
// streams are reproducible across standard library implementations.

#include <cstdint>
#include <random>

#include "abslope/math.hpp"

namespace abslope {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for an independent stream (per replication, per row, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_pos() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double normal() { return normal_quantile(uniform_pos()); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shapes below one use the boost
    /// identity G(a) = G(a+1) * U^{1/a}.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::domain_error("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform_pos(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    /// log of a Gamma(shape, 1) draw; avoids underflow for tiny shapes, where
    /// the plain draw would round to zero.
    double log_gamma(double shape) {
        if (!(shape > 0.0)) throw std::domain_error("Rng::log_gamma: shape must be positive");
        if (shape < 1.0) {
            return std::log(gamma(shape + 1.0)) + std::log(uniform_pos()) / shape;
        }
        return std::log(gamma(shape));
    }

    /// Beta(a, b) computed in log space so that shapes as small as 1e-3 do
    /// not collapse to exactly 0 or 1.
    double beta(double a, double b) {
        const double lx = log_gamma(a);
        const double ly = log_gamma(b);
        return std::exp(lx - log_sum_exp(lx, ly));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace abslope
