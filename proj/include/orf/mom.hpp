#pragma once

// Method-of-moments estimation. Sample moments of counts and log-times are
// matched to the closed-form model moments; the count equations invert
// through a bisection on the bivariate-normal correlation.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "orf/bvn.hpp"
#include "orf/model.hpp"
#include "orf/normal.hpp"
#include "orf/types.hpp"

namespace orf {

struct ItemMoments {
    double ybar = 0.0;   // mean count
    double s2_y = 0.0;   // count variance (n-1 divisor)
    double tbar = 0.0;   // mean log-time
    double s2_t = 0.0;   // log-time variance
    double s_yt = 0.0;   // count / log-time covariance
    int n_obs = 0;
};

struct SampleMoments {
    std::vector<ItemMoments> item;
    // Pairwise log-time covariances over individuals observing both items;
    // indexed [i][i2] with i < i2.
    std::vector<std::vector<double>> s_tt;
    std::vector<std::vector<int>> pair_n;
};

// Sample moments per item and per item pair, each computed over the
// individuals actually observing the item(s) involved.
inline SampleMoments compute_moments(const Dataset& data) {
    const std::size_t n_items = data.items.size();
    SampleMoments moments;
    moments.item.resize(n_items);
    moments.s_tt.assign(n_items, std::vector<double>(n_items, 0.0));
    moments.pair_n.assign(n_items, std::vector<int>(n_items, 0));

    // First pass: per-item means.
    std::vector<double> sum_y(n_items, 0.0), sum_t(n_items, 0.0);
    std::vector<int> count(n_items, 0);
    for (const auto& ind : data.individuals) {
        for (const auto& [idx, obs] : ind.observed) {
            const auto i = static_cast<std::size_t>(idx);
            sum_y[i] += obs.count;
            sum_t[i] += obs.log_time;
            ++count[i];
        }
    }
    for (std::size_t i = 0; i < n_items; ++i) {
        if (count[i] < 2) {
            throw ValidationError("compute_moments: item " + data.items[i].id +
                                  " observed by fewer than 2 individuals");
        }
        moments.item[i].n_obs = count[i];
        moments.item[i].ybar = sum_y[i] / count[i];
        moments.item[i].tbar = sum_t[i] / count[i];
    }

    // Second pass: central second moments.
    for (const auto& ind : data.individuals) {
        for (const auto& [idx, obs] : ind.observed) {
            const auto i = static_cast<std::size_t>(idx);
            const double dy = obs.count - moments.item[i].ybar;
            const double dt = obs.log_time - moments.item[i].tbar;
            moments.item[i].s2_y += dy * dy;
            moments.item[i].s2_t += dt * dt;
            moments.item[i].s_yt += dy * dt;
        }
    }
    for (auto& m : moments.item) {
        m.s2_y /= (m.n_obs - 1);
        m.s2_t /= (m.n_obs - 1);
        m.s_yt /= (m.n_obs - 1);
    }

    // Pairwise log-time covariances use means recomputed over the
    // co-observation set so the n-1 divisor stays unbiased.
    for (std::size_t i = 0; i < n_items; ++i) {
        for (std::size_t i2 = i + 1; i2 < n_items; ++i2) {
            double si = 0.0, si2 = 0.0;
            int n = 0;
            for (const auto& ind : data.individuals) {
                const auto a = ind.observed.find(static_cast<int>(i));
                const auto b = ind.observed.find(static_cast<int>(i2));
                if (a != ind.observed.end() && b != ind.observed.end()) {
                    si += a->second.log_time;
                    si2 += b->second.log_time;
                    ++n;
                }
            }
            if (n < 2) {
                throw ValidationError("compute_moments: item pair (" + data.items[i].id +
                                      ", " + data.items[i2].id +
                                      ") co-observed by fewer than 2 individuals");
            }
            const double mi = si / n, mi2 = si2 / n;
            double cov = 0.0;
            for (const auto& ind : data.individuals) {
                const auto a = ind.observed.find(static_cast<int>(i));
                const auto b = ind.observed.find(static_cast<int>(i2));
                if (a != ind.observed.end() && b != ind.observed.end()) {
                    cov += (a->second.log_time - mi) * (b->second.log_time - mi2);
                }
            }
            moments.s_tt[i][i2] = cov / (n - 1);
            moments.pair_n[i][i2] = n;
        }
    }
    return moments;
}

namespace detail {

// Mean counts at or beyond the boundary are pulled into the open interval so
// the probit inversion stays finite; the pull shrinks with the sample size.
inline double clamp_mean_fraction(double pbar, int n_words, int sample_size) {
    if (sample_size <= 0) return pbar;
    const double margin = 1.0 / (4.0 * n_words * sample_size);
    return std::clamp(pbar, margin, 1.0 - margin);
}

}  // namespace detail

// Solve Phi2(q, q | rho) = (s2_y + ybar (ybar - 1)) / (N (N - 1)) for rho,
// with q = Phi^{-1}(ybar / N). Returns 0 when the right-hand side sits below
// the independence value (under-dispersed sampling noise).
inline double solve_rho(double ybar, double s2_y, int n_words, int sample_size = 0) {
    if (!(ybar > 0.0) || !(ybar < n_words)) {
        if (sample_size <= 0 || ybar < 0.0 || ybar > n_words) {
            throw ValidationError("solve_rho: mean count must lie strictly inside (0, N)");
        }
    }
    if (n_words < 2) {
        throw ValidationError("solve_rho: N must be >= 2 to carry dispersion information");
    }
    const double pbar =
        detail::clamp_mean_fraction(ybar / n_words, n_words, sample_size);
    const double yb = pbar * n_words;
    const double q = norm_quantile(pbar);
    const double rhs = (s2_y + yb * (yb - 1.0)) /
                       (static_cast<double>(n_words) * (n_words - 1.0));

    const double upper = 1.0 - 1e-9;
    auto residual = [&](double rho) { return bvn_cdf(q, q, Correlation(rho)) - rhs; };
    if (residual(0.0) >= 0.0) return 0.0;
    if (residual(upper) <= 0.0) return upper;
    double lo = 0.0, hi = upper;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double r = residual(mid);
        if (std::abs(r) <= 1e-12 || hi - lo < 1e-15) return mid;
        (r < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// a = sqrt(rho / (1 - rho)), b = -sqrt(1 + a^2)/a * Phi^{-1}(ybar/N).
// A zero correlation maps to the minimal positive discrimination so the
// success probability stays well defined downstream.
inline std::pair<double, double> estimate_accuracy(double ybar, double s2_y, int n_words,
                                                   int sample_size = 0) {
    const double rho = solve_rho(ybar, s2_y, n_words, sample_size);
    const double pbar =
        detail::clamp_mean_fraction(ybar / n_words, n_words, sample_size);
    double a = std::sqrt(rho / (1.0 - rho));
    if (a < 1e-6) a = 1e-6;
    const double b = -std::sqrt(1.0 + a * a) / a * norm_quantile(pbar);
    return {a, b};
}

// Average of all pairwise log-time covariances.
inline double estimate_sigma2_tau(const SampleMoments& moments) {
    const std::size_t n_items = moments.item.size();
    if (n_items < 2) {
        throw ValidationError(
            "estimate_sigma2_tau: at least 2 items required to identify sigma2_tau");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n_items; ++i) {
        for (std::size_t i2 = i + 1; i2 < n_items; ++i2) {
            sum += moments.s_tt[i][i2];
        }
    }
    return 2.0 * sum / (static_cast<double>(n_items) * (n_items - 1.0));
}

// beta_i = mean log-time; alpha_i = (s2_t - sigma2_tau)^(-1/2) with the
// finite-sample correction mapping non-positive residual variance to the
// infinity sentinel.
inline std::vector<std::pair<double, double>> estimate_speed(const SampleMoments& moments,
                                                             double sigma2_tau) {
    std::vector<std::pair<double, double>> out;
    out.reserve(moments.item.size());
    for (const auto& m : moments.item) {
        const double resid = m.s2_t - sigma2_tau;
        const double alpha = resid > 0.0 ? 1.0 / std::sqrt(resid) : kAlphaInfinity;
        out.emplace_back(alpha, m.tbar);
    }
    return out;
}

// sigma_theta_tau estimator: invert the count/log-time covariance formula
// item by item and average.
inline double estimate_cross_cov(const SampleMoments& moments,
                                 const std::vector<std::pair<double, double>>& accuracy,
                                 const std::vector<int>& n_words) {
    const std::size_t n_items = moments.item.size();
    if (accuracy.size() != n_items || n_words.size() != n_items) {
        throw ValidationError("estimate_cross_cov: accuracy estimates required for all items");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n_items; ++i) {
        const double a = accuracy[i].first;
        const double ab = a * accuracy[i].second;
        const double a2 = a * a;
        sum += moments.item[i].s_yt / n_words[i] * std::sqrt((a2 + 1.0) / a2) *
               std::exp(0.5 * ab * ab / (a2 + 1.0));
    }
    return -kSqrt2Pi * sum / static_cast<double>(n_items);
}

// Full method-of-moments chain. If the implied latent covariance is not
// positive definite, sigma_theta_tau is shrunk toward zero to just inside
// the boundary and the repair is flagged.
inline FitResult fit_mom(const Dataset& data) {
    data.validate();
    const SampleMoments moments = compute_moments(data);
    const std::size_t n_items = data.items.size();

    FitResult fit;
    fit.items.resize(n_items);
    std::vector<std::pair<double, double>> accuracy(n_items);
    std::vector<int> n_words(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        n_words[i] = data.items[i].n_words;
        accuracy[i] = estimate_accuracy(moments.item[i].ybar, moments.item[i].s2_y,
                                        n_words[i], moments.item[i].n_obs);
    }

    double sigma2_tau = estimate_sigma2_tau(moments);
    if (!(sigma2_tau > 0.0)) {
        sigma2_tau = 1e-6;
        fit.diagnostics.sigma2_tau_clamped = true;
    }
    const auto speed = estimate_speed(moments, sigma2_tau);
    double sigma_theta_tau = estimate_cross_cov(moments, accuracy, n_words);

    const double bound = std::sqrt(sigma2_tau);
    if (std::abs(sigma_theta_tau) >= bound) {
        const double repaired = std::max(bound - 1e-6, 0.0);
        sigma_theta_tau = std::copysign(repaired, sigma_theta_tau);
        fit.diagnostics.pd_repaired = true;
    }

    for (std::size_t i = 0; i < n_items; ++i) {
        fit.items[i].a = accuracy[i].first;
        fit.items[i].b = accuracy[i].second;
        fit.items[i].alpha = speed[i].first;
        fit.items[i].beta = speed[i].second;
        fit.items[i].n_words = n_words[i];
        if (!std::isfinite(fit.items[i].alpha)) ++fit.diagnostics.infinite_alpha_count;
    }
    fit.pop.sigma2_tau = sigma2_tau;
    fit.pop.sigma_theta_tau = sigma_theta_tau;
    return fit;
}

}  // namespace orf
