#pragma once

// Model definition: probit-binomial counts and log-normal times driven by a
// bivariate normal latent pair. This header holds the closed-form moments of
// the observables plus the complete-data and observed-data log-likelihoods.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "orf/bvn.hpp"
#include "orf/normal.hpp"
#include "orf/quadrature.hpp"
#include "orf/types.hpp"

namespace orf {

// Clamp bounds applied to probit probabilities before taking logs, so extreme
// latent draws cannot produce infinite log-mass.
inline constexpr double kProbFloor = 1e-300;
inline constexpr double kProbCeil = 1.0 - 1e-16;
inline constexpr double kLogProbFloor = -690.77552789821368;    // log(1e-300)
inline constexpr double kLogProbCeilComp = -36.841361487904731; // log(1e-16)

// P(word read correctly | theta): Phi(a (theta - b)), clamped into (0, 1).
inline double success_prob(double theta, const ItemParams& item) {
    const double p = norm_cdf(item.a * (theta - item.b));
    return std::clamp(p, kProbFloor, kProbCeil);
}

// y log p + (N - y) log(1 - p) at p = Phi(eta), with the probability clamp
// applied in log space (no cancellation near p = 1).
inline double probit_binomial_term(double eta, int y, int n_words) {
    const double log_p = std::max(norm_logcdf(eta), kLogProbFloor);
    const double log_q = std::max(norm_logcdf(-eta), kLogProbCeilComp);
    return y * log_p + (n_words - y) * log_q;
}

// Value plus first and second derivatives in eta of probit_binomial_term.
// Derivatives vanish on the clamped plateaus, matching the value exactly.
struct ProbitTermDerivs {
    double value;
    double d1;
    double d2;
};

inline ProbitTermDerivs probit_binomial_term_derivs(double eta, int y, int n_words) {
    const double log_p = norm_logcdf(eta);
    const double log_q = norm_logcdf(-eta);
    const bool p_live = log_p > kLogProbFloor;
    const bool q_live = log_q > kLogProbCeilComp;
    const int n0 = n_words - y;
    ProbitTermDerivs out{};
    out.value = y * std::max(log_p, kLogProbFloor) + n0 * std::max(log_q, kLogProbCeilComp);
    if (y > 0 && p_live) {
        const double r1 = std::exp(norm_logpdf(eta) - log_p);
        out.d1 += y * r1;
        out.d2 += y * (-eta * r1 - r1 * r1);
    }
    if (n0 > 0 && q_live) {
        const double r0 = std::exp(norm_logpdf(eta) - log_q);
        out.d1 -= n0 * r0;
        out.d2 += n0 * (eta * r0 - r0 * r0);
    }
    return out;
}

// -a b / sqrt(1 + a^2), the marginal probit argument of the item.
inline double marginal_probit_arg(const ItemParams& item) {
    return -item.a * item.b / std::sqrt(1.0 + item.a * item.a);
}

// E(Y) = N Phi(-ab / sqrt(1 + a^2)).
inline double mean_count(const ItemParams& item) {
    return item.n_words * norm_cdf(marginal_probit_arg(item));
}

// Var(Y): two-term expression through the bivariate normal CDF at the
// marginal probit argument with correlation a^2 / (1 + a^2).
inline double var_count(const ItemParams& item) {
    const double q = marginal_probit_arg(item);
    const double a2 = item.a * item.a;
    const double phi2 = bvn_cdf(q, q, Correlation(a2 / (1.0 + a2)));
    const double phi1 = norm_cdf(q);
    const double n = item.n_words;
    return n * n * (phi2 - phi1 * phi1) + n * (phi1 - phi2);
}

// E(log T) = beta.
inline double mean_logtime(const ItemParams& item) { return item.beta; }

// Var(log T) = sigma2_tau + 1/alpha^2; the infinity sentinel contributes zero.
inline double var_logtime(const ItemParams& item, const PopulationParams& pop) {
    const double meas = std::isfinite(item.alpha) ? 1.0 / (item.alpha * item.alpha) : 0.0;
    return pop.sigma2_tau + meas;
}

// Cov(log T_i, log T_i') = sigma2_tau for distinct items.
inline double cov_logtime_pair(const PopulationParams& pop) { return pop.sigma2_tau; }

// Cov(Y, log T) = -sigma_theta_tau * N/sqrt(2 pi) * sqrt(a^2/(a^2+1))
//                 * exp(-a^2 b^2 / (2 (a^2+1))).
inline double cov_count_logtime(const ItemParams& item, const PopulationParams& pop) {
    const double a2 = item.a * item.a;
    return -pop.sigma_theta_tau * item.n_words * kInvSqrt2Pi *
           std::sqrt(a2 / (a2 + 1.0)) *
           std::exp(-0.5 * a2 * item.b * item.b / (a2 + 1.0));
}

// Raw-time moments implied by the log-normal structure:
// E(T) = exp(beta + sigma2_tau/2 + 1/(2 alpha^2)),
// Var(T) = (exp(sigma2_tau + 1/alpha^2) - 1) E(T)^2.
inline double mean_rawtime(const ItemParams& item, const PopulationParams& pop) {
    const double meas = std::isfinite(item.alpha) ? 1.0 / (item.alpha * item.alpha) : 0.0;
    return std::exp(item.beta + 0.5 * pop.sigma2_tau + 0.5 * meas);
}

inline double sd_rawtime(const ItemParams& item, const PopulationParams& pop) {
    const double mean = mean_rawtime(item, pop);
    return mean * std::sqrt(std::expm1(var_logtime(item, pop)));
}

inline double log_binom_coef(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log P(Y = y | theta) for the probit-binomial count model.
inline double count_logmass(int y, const ItemParams& item, double theta) {
    return log_binom_coef(item.n_words, y) +
           probit_binomial_term(item.a * (theta - item.b), y, item.n_words);
}

// log density of the observed log-time given the speed trait.
// An infinite alpha is a point mass at beta - tau.
inline double logtime_logdensity(double log_time, const ItemParams& item, double tau) {
    const double residual = log_time - item.beta + tau;
    if (!std::isfinite(item.alpha)) {
        return residual == 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
    }
    return std::log(item.alpha) - kLogSqrt2Pi -
           0.5 * item.alpha * item.alpha * residual * residual;
}

// log of the bivariate latent density at (theta, tau).
inline double latent_logdensity(const LatentPair& latent, const PopulationParams& pop) {
    const double det = pop.residual_var();
    if (!(det > 0.0)) {
        throw ValidationError("latent_logdensity: covariance is not positive definite");
    }
    const double quad = pop.sigma2_tau * latent.theta * latent.theta -
                        2.0 * pop.sigma_theta_tau * latent.theta * latent.tau +
                        latent.tau * latent.tau;
    return -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * quad / det;
}

// Complete-data log-likelihood: counts, times, and latent prior, constants
// included. Requires one latent pair per individual.
inline double complete_loglik(const Dataset& data, std::span<const LatentPair> latents,
                              std::span<const ItemParams> items,
                              const PopulationParams& pop) {
    if (latents.size() != data.individuals.size()) {
        throw ValidationError("complete_loglik: one latent pair per individual required");
    }
    pop.validate();
    double total = 0.0;
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        const auto& ind = data.individuals[j];
        const auto& latent = latents[j];
        for (const auto& [idx, obs] : ind.observed) {
            const auto& item = items[static_cast<std::size_t>(idx)];
            if (obs.count < 0 || obs.count > item.n_words) {
                throw ValidationError("complete_loglik: count out of range for individual " +
                                      ind.id);
            }
            total += count_logmass(obs.count, item, latent.theta);
            total += logtime_logdensity(obs.log_time, item, latent.tau);
        }
        total += latent_logdensity(latent, pop);
    }
    return total;
}

// Observed-data log-likelihood. The speed trait enters every factor as a
// Gaussian, so conditional on the accuracy trait its integral has a closed
// form. The remaining one-dimensional integral over the accuracy trait uses
// a Gauss-Hermite rule recentered at the mode and curvature of the log
// integrand, which keeps the quadrature stable across orders even for the
// sharply informative probit-binomial products.
inline double observed_loglik(const Dataset& data, std::span<const ItemParams> items,
                              const PopulationParams& pop, int quad_order = 40) {
    if (quad_order < 10 || quad_order > 150) {
        throw ValidationError("observed_loglik: quad_order must lie in [10, 150]");
    }
    pop.validate();
    for (const auto& item : items) {
        if (!std::isfinite(item.alpha)) {
            throw NumericError(
                "observed_loglik: infinite alpha sentinel not supported in quadrature");
        }
    }
    const QuadRule rule = gauss_hermite_normal(quad_order);
    const double v = pop.residual_var();

    double total = 0.0;
    std::vector<double> log_terms(rule.nodes.size());
    for (const auto& ind : data.individuals) {
        if (ind.observed.empty()) continue;  // empty product integrates to one

        // time side: A = sum alpha^2, W = sum alpha^2 (t - beta), plus the
        // theta-free pieces of the collapsed tau integral and the binomial
        // coefficients
        double precision_sum = 0.0, weighted_residual = 0.0, theta_free = 0.0;
        for (const auto& [idx, obs] : ind.observed) {
            const auto& item = items[static_cast<std::size_t>(idx)];
            const double a2 = item.alpha * item.alpha;
            const double r = obs.log_time - item.beta;
            precision_sum += a2;
            weighted_residual += a2 * r;
            theta_free += std::log(item.alpha) - kLogSqrt2Pi - 0.5 * a2 * r * r +
                          log_binom_coef(item.n_words, obs.count);
        }
        const double marginal_var = v + 1.0 / precision_sum;
        theta_free += 0.5 * weighted_residual * weighted_residual / precision_sum -
                      0.5 * std::log(precision_sum) -
                      0.5 * std::log(2.0 * M_PI * marginal_var) + 0.5 * std::log(2.0 * M_PI);
        const double shift = weighted_residual / precision_sum;

        auto log_integrand = [&](double theta) {
            double count_part = 0.0;
            for (const auto& [idx, obs] : ind.observed) {
                const auto& item = items[static_cast<std::size_t>(idx)];
                count_part += probit_binomial_term(item.a * (theta - item.b), obs.count,
                                                   item.n_words);
            }
            const double z = pop.sigma_theta_tau * theta + shift;
            return count_part + theta_free - 0.5 * z * z / marginal_var +
                   norm_logpdf(theta);
        };

        const double mode = golden_section_max(log_integrand, -10.0, 10.0, 1e-10);
        const double step = 1e-4;
        const double curvature = (log_integrand(mode + step) - 2.0 * log_integrand(mode) +
                                  log_integrand(mode - step)) /
                                 (step * step);
        const double scale = 1.0 / std::sqrt(std::max(-curvature, 1e-8));

        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double x = rule.nodes[q];
            log_terms[q] = std::log(rule.weights[q]) + log_integrand(mode + scale * x) +
                           std::log(scale) - norm_logpdf(x);
        }
        const double peak = *std::max_element(log_terms.begin(), log_terms.end());
        double sum = 0.0;
        for (double t : log_terms) sum += std::exp(t - peak);
        total += peak + std::log(sum);
    }
    return total;
}

}  // namespace orf
