#pragma once

// Seeded, splittable random streams. A stream is identified by a (seed,
// stream_id) pair; child streams are derived by hashing keys into the
// stream id, so per-individual sequences are reproducible regardless of
// the order in which they are consumed. Normal variates go through the
// quantile function, keeping every draw a pure function of the stream.

#include <array>
#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

#include "orf/errors.hpp"
#include "orf/normal.hpp"

namespace orf {

namespace detail {

// splitmix64 finalizer; bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t splitmix_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    return mix64(state);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

// Derive an independent child stream keyed by an integer.
inline RngStream substream(RngStream parent, std::uint64_t key) {
    return RngStream{parent.seed,
                     detail::mix64(parent.stream_id ^ detail::mix64(key + 0x632BE59BD9B4E019ULL))};
}

// FNV-1a hash for keying streams by identifiers.
inline std::uint64_t hash_key(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline RngStream substream(RngStream parent, std::string_view key) {
    return substream(parent, hash_key(key));
}

// xoshiro256++ engine initialized from a stream.
class Rng {
  public:
    explicit Rng(RngStream stream) {
        std::uint64_t h = 0x9E3779B97F4A7C15ULL;
        h = detail::mix64(h ^ stream.seed);
        h = detail::mix64(h ^ stream.stream_id);
        for (auto& word : state_) {
            word = detail::splitmix_next(h);
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
            state_[0] = 1;  // the all-zero state is invalid for xoshiro
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on the open interval (0, 1); safe to feed into logs and quantiles.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double std_normal() { return norm_quantile(uniform_open()); }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::array<std::uint64_t, 4> state_;
};

inline std::vector<double> draw_std_normal(RngStream stream, std::size_t count) {
    Rng rng(stream);
    std::vector<double> draws(count);
    for (auto& d : draws) d = rng.std_normal();
    return draws;
}

// Lower-triangular Cholesky factor of a 2x2 covariance matrix.
struct Chol2 {
    double l11, l21, l22;
};

inline Chol2 cholesky2(const std::array<std::array<double, 2>, 2>& cov) {
    const double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if (!(cov[0][0] > 0.0) || !(det > 0.0)) {
        throw NumericError("draw_bivariate: covariance matrix is not positive definite");
    }
    Chol2 chol;
    chol.l11 = std::sqrt(cov[0][0]);
    chol.l21 = cov[0][1] / chol.l11;
    chol.l22 = std::sqrt(cov[1][1] - chol.l21 * chol.l21);
    return chol;
}

inline std::vector<std::array<double, 2>> draw_bivariate(
    const std::array<double, 2>& mu, const std::array<std::array<double, 2>, 2>& cov,
    RngStream stream, std::size_t count) {
    const Chol2 chol = cholesky2(cov);
    Rng rng(stream);
    std::vector<std::array<double, 2>> draws(count);
    for (auto& d : draws) {
        const double z1 = rng.std_normal();
        const double z2 = rng.std_normal();
        d[0] = mu[0] + chol.l11 * z1;
        d[1] = mu[1] + chol.l21 * z1 + chol.l22 * z2;
    }
    return draws;
}

}  // namespace orf
