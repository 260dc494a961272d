#pragma once

// Bivariate standard-normal CDF. The computation reduces the 2-D integral to
// a single integral over the correlation parameter and applies a fixed-order
// Gauss-Legendre rule, with the separate high-correlation expansion needed
// once |rho| approaches 1. Absolute accuracy is ~1e-15, comfortably inside
// the 1e-10 budget the estimators rely on.

#include <cmath>
#include <stdexcept>

#include "orf/normal.hpp"
#include "orf/quadrature.hpp"

namespace orf {

// Correlation constrained to the open interval (-1, 1).
class Correlation {
  public:
    explicit Correlation(double rho) : rho_(rho) {
        if (!(std::abs(rho) < 1.0)) {
            throw std::invalid_argument("Correlation: |rho| must be < 1");
        }
    }
    double value() const { return rho_; }

  private:
    double rho_;
};

namespace detail {

inline const QuadRule& bvn_rule(double abs_r) {
    static const QuadRule rule6 = gauss_legendre(6);
    static const QuadRule rule12 = gauss_legendre(12);
    static const QuadRule rule20 = gauss_legendre(20);
    if (abs_r < 0.3) return rule6;
    if (abs_r < 0.75) return rule12;
    return rule20;
}

// Upper-orthant probability P(X > h, Y > k) for standard bivariate normal
// variables with correlation r.
inline double bvn_upper(double h, double k, double r) {
    const QuadRule& rule = bvn_rule(std::abs(r));
    const double two_pi = 2.0 * M_PI;
    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        if (r != 0.0) {
            const double hs = 0.5 * (h * h + k * k);
            const double asr = std::asin(r);
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double sn = std::sin(0.5 * asr * (rule.nodes[i] + 1.0));
                bvn += rule.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
            bvn *= asr / (2.0 * two_pi);
        }
        return bvn + norm_cdf(-h) * norm_cdf(-k);
    }
    // |r| in [0.925, 1): expansion around the perfectly correlated limit.
    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    const double as = (1.0 - r) * (1.0 + r);
    const double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0) {
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    }
    if (-hk < 100.0) {
        const double b = std::sqrt(bs);
        bvn -= std::exp(-0.5 * hk) * kSqrt2Pi * norm_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    const double ah = 0.5 * a;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double xs_root = ah * (rule.nodes[i] + 1.0);
        const double xs = xs_root * xs_root;
        asr = -0.5 * (bs / xs + hk);
        if (asr > -100.0) {
            const double rs = std::sqrt(1.0 - xs);
            bvn += ah * rule.weights[i] * std::exp(asr) *
                   (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
        }
    }
    bvn = -bvn / two_pi;
    if (r > 0.0) {
        return bvn + norm_cdf(-std::max(h, k));
    }
    bvn = -bvn;
    if (k > h) bvn += norm_cdf(k) - norm_cdf(h);
    return bvn;
}

}  // namespace detail

// P(Z1 <= x, Z2 <= y) for standard bivariate normal with correlation rho.
inline double bvn_cdf(double x, double y, Correlation rho) {
    const double p = detail::bvn_upper(-x, -y, rho.value());
    if (p < 0.0) return 0.0;
    if (p > 1.0) return 1.0;
    return p;
}

}  // namespace orf
