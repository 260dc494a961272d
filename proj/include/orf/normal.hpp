#pragma once

// Univariate standard-normal primitives: density, CDF, log-CDF, quantile,
// Mills ratio. Everything here is called inside tight estimation loops, so
// the implementations favor closed-form rational approximations over
// iterative schemes.

#include <cmath>
#include <stdexcept>

namespace orf {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;  // (2*pi)^(-1/2)
inline constexpr double kSqrt2Pi = 2.5066282746310005024157653;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;  // log(sqrt(2*pi))
inline constexpr double kSqrt2 = 1.4142135623730950488016887;

inline double norm_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double norm_logpdf(double x) {
    return -0.5 * x * x - kLogSqrt2Pi;
}

// Standard normal CDF via erfc; absolute error below 1e-15 everywhere and
// good relative accuracy down to the underflow limit near x = -38.
inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

// log Phi(x), stable in the far left tail where norm_cdf underflows.
inline double norm_logcdf(double x) {
    if (x > -20.0) {
        return std::log(norm_cdf(x));
    }
    // Asymptotic expansion: Phi(x) ~ phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - ...)
    const double x2 = x * x;
    const double inv2 = 1.0 / x2;
    const double series = -inv2 * (1.0 - inv2 * (3.0 - inv2 * (15.0 - inv2 * 105.0)));
    return norm_logpdf(x) - std::log(-x) + std::log1p(series);
}

// Mills-type ratio phi(x)/Phi(x); bounded and accurate for arbitrarily
// negative x (where it approaches -x).
inline double norm_pdf_over_cdf(double x) {
    return std::exp(norm_logpdf(x) - norm_logcdf(x));
}

namespace detail {

// Rational approximation of the normal quantile (Acklam), ~1e-9 relative.
inline double norm_quantile_estimate(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

// Quantile of the standard normal: rational initial estimate refined by two
// Newton steps, giving near machine precision on (0, 1).
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("norm_quantile: p must lie in (0, 1)");
    }
    double x = detail::norm_quantile_estimate(p);
    for (int step = 0; step < 2; ++step) {
        const double density = norm_pdf(x);
        if (density == 0.0) break;  // beyond ~1e-300 the estimate is all we have
        x -= (norm_cdf(x) - p) / density;
    }
    return x;
}

}  // namespace orf
