#pragma once

// Monte Carlo EM. The E-step draws the latent pair per individual by
// rejection sampling: the accuracy trait comes from its exact marginal-
// posterior Gaussian factor times the probit-binomial product (bounded by
// one), and the speed trait follows from its exact conditional Gaussian.
// The M-step has closed forms for the speed and covariance blocks and a
// damped Newton solver for each item's probit accuracy curve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "orf/model.hpp"
#include "orf/quadrature.hpp"
#include "orf/rng.hpp"
#include "orf/types.hpp"

namespace orf {

struct McemConfig {
    // (iterations, draws per individual) stages, run start to finish.
    std::vector<std::pair<int, int>> schedule{{10, 20}, {3, 200}};
    double rel_tol = 1e-3;  // final-stage relative-change threshold (convergence flag)
    RngStream seed;
    long max_rejection_attempts = 1000000;
    int monitor_quad_order = 40;

    void validate() const {
        if (schedule.empty()) throw ValidationError("McemConfig: schedule must be non-empty");
        for (const auto& [iters, m] : schedule) {
            if (iters < 1 || m < 1) {
                throw ValidationError("McemConfig: schedule entries must be >= 1");
            }
        }
        if (!(rel_tol > 0.0)) throw ValidationError("McemConfig: rel_tol must be positive");
        if (max_rejection_attempts < 1) {
            throw ValidationError("McemConfig: max_rejection_attempts must be >= 1");
        }
    }
};

// Posterior draws for every individual, together with the parameter state
// they were drawn under. by_individual aligns with the dataset's individual
// order; individual_ids carries the matching identities so reductions can
// run in a canonical order.
struct LatentDraws {
    std::vector<std::vector<LatentPair>> by_individual;
    std::vector<std::string> individual_ids;
    std::vector<ItemParams> items_state;
    PopulationParams pop_state;
    int m_draws = 0;
};

// Gaussian envelope for the accuracy-trait rejection sampler.
struct PosteriorEnvelope {
    double mu_g = 0.0;
    double sigma2_g = 1.0;
    double log_gamma_inv = 0.0;  // log sup of the probit-binomial product
};

namespace detail {

// Canonical traversal order for reductions: sorted by individual id, so
// sums do not depend on dataset storage order.
inline std::vector<std::size_t> reduction_order(const Dataset& data) {
    std::vector<std::size_t> order(data.individuals.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
        return data.individuals[lhs].id < data.individuals[rhs].id;
    });
    return order;
}

// Time-information summary of one individual: A = sum alpha_i^2 and
// W = sum alpha_i^2 (t_i - beta_i) over the observed items.
struct TimeInfo {
    double precision_sum = 0.0;
    double weighted_residual = 0.0;
};

inline TimeInfo time_info(const Individual& ind, std::span<const ItemParams> items) {
    TimeInfo info;
    for (const auto& [idx, obs] : ind.observed) {
        const auto& item = items[static_cast<std::size_t>(idx)];
        if (!std::isfinite(item.alpha)) {
            throw NumericError("mcem: infinite alpha sentinel cannot enter the E-step");
        }
        const double a2 = item.alpha * item.alpha;
        info.precision_sum += a2;
        info.weighted_residual += a2 * (obs.log_time - item.beta);
    }
    return info;
}

// log of the probit-binomial product over the individual's observed items,
// dropping the theta-free binomial coefficients.
inline double count_product_logmass(double theta, const Individual& ind,
                                    std::span<const ItemParams> items) {
    double total = 0.0;
    for (const auto& [idx, obs] : ind.observed) {
        const auto& item = items[static_cast<std::size_t>(idx)];
        total += probit_binomial_term(item.a * (theta - item.b), obs.count, item.n_words);
    }
    return total;
}

// Gaussian factor of the accuracy-trait posterior: integrate the speed trait
// out of prior x time-likelihood. With A and W as above and
// v = Var(tau | theta):
//   variance (1 + A v) / (1 + A sigma2_tau),
//   mean     -sigma_theta_tau W / (1 + A sigma2_tau).
inline void theta_gaussian_factor(const Individual& ind, std::span<const ItemParams> items,
                                  const PopulationParams& pop, double& mu, double& sigma2) {
    const TimeInfo info = time_info(ind, items);
    const double v = pop.residual_var();
    const double denom = 1.0 + info.precision_sum * pop.sigma2_tau;
    sigma2 = (1.0 + info.precision_sum * v) / denom;
    mu = -pop.sigma_theta_tau * info.weighted_residual / denom;
}

}  // namespace detail

// log kernel of [theta | y, t]: probit-binomial product plus the Gaussian
// factor obtained by integrating tau out of the prior and time likelihood.
inline double theta_posterior_logkernel(double theta, const Individual& ind,
                                        std::span<const ItemParams> items,
                                        const PopulationParams& pop) {
    pop.validate();
    double mu = 0.0, sigma2 = 1.0;
    detail::theta_gaussian_factor(ind, items, pop, mu, sigma2);
    const double z = theta - mu;
    return detail::count_product_logmass(theta, ind, items) -
           0.5 * z * z / sigma2 - 0.5 * std::log(2.0 * M_PI * sigma2);
}

// Envelope for rejection sampling: the Gaussian factor as proposal, and the
// supremum of the bounded probit-binomial product located by a grid scan
// refined with golden-section search. All-correct and all-incorrect response
// patterns push the supremum to the boundary value of one.
inline PosteriorEnvelope build_envelope(const Individual& ind,
                                        std::span<const ItemParams> items,
                                        const PopulationParams& pop) {
    pop.validate();
    PosteriorEnvelope env;
    detail::theta_gaussian_factor(ind, items, pop, env.mu_g, env.sigma2_g);

    if (ind.observed.empty()) {
        env.log_gamma_inv = 0.0;
        return env;
    }
    bool all_correct = true, all_wrong = true;
    for (const auto& [idx, obs] : ind.observed) {
        all_correct = all_correct && obs.count == items[static_cast<std::size_t>(idx)].n_words;
        all_wrong = all_wrong && obs.count == 0;
    }

    auto ratio = [&](double theta) {
        return detail::count_product_logmass(theta, ind, items);
    };
    const double sd = std::sqrt(env.sigma2_g);
    const double lo = env.mu_g - 8.0 * sd;
    const double hi = env.mu_g + 8.0 * sd;
    constexpr int kGridPoints = 2001;
    const double step = (hi - lo) / (kGridPoints - 1);
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = 0;
    for (int g = 0; g < kGridPoints; ++g) {
        const double value = ratio(lo + g * step);
        if (value > best) {
            best = value;
            best_idx = g;
        }
    }
    const double bracket_lo = lo + std::max(best_idx - 1, 0) * step;
    const double bracket_hi = lo + std::min(best_idx + 1, kGridPoints - 1) * step;
    const double refined = golden_section_max(ratio, bracket_lo, bracket_hi, 1e-10);
    env.log_gamma_inv = std::max(best, ratio(refined));
    if (all_correct || all_wrong) {
        // product is monotone; its supremum of one is approached at infinity
        env.log_gamma_inv = 0.0;
    }
    return env;
}

// One accepted draw from [theta | y, t] by rejection against the envelope.
inline double sample_theta(const Individual& ind, const PosteriorEnvelope& env,
                           std::span<const ItemParams> items, const PopulationParams& pop,
                           Rng& rng, long max_attempts = 1000000) {
    (void)pop;
    const double sd = std::sqrt(env.sigma2_g);
    for (long attempt = 0; attempt < max_attempts; ++attempt) {
        const double proposal = env.mu_g + sd * rng.std_normal();
        const double log_u = std::log(rng.uniform_open());
        const double log_ratio =
            detail::count_product_logmass(proposal, ind, items) - env.log_gamma_inv;
        if (log_u <= log_ratio) return proposal;
    }
    throw NumericError("sample_theta: rejection sampler exceeded max attempts for individual " +
                       ind.id);
}

// Exact conditional draw of the speed trait:
// precision = 1/v + sum alpha_i^2,
// mean = (sigma_theta_tau theta / v - sum alpha_i^2 (t_i - beta_i)) / precision.
inline double sample_tau_given_theta(double theta, const Individual& ind,
                                     std::span<const ItemParams> items,
                                     const PopulationParams& pop, Rng& rng) {
    const detail::TimeInfo info = detail::time_info(ind, items);
    const double v = pop.residual_var();
    const double precision = 1.0 / v + info.precision_sum;
    const double mean =
        (pop.sigma_theta_tau * theta / v - info.weighted_residual) / precision;
    return mean + rng.std_normal() / std::sqrt(precision);
}

// M independent posterior draws per individual, each individual on its own
// identity-keyed substream so output does not depend on traversal order.
inline LatentDraws e_step(const Dataset& data, std::span<const ItemParams> items,
                          const PopulationParams& pop, int m_draws, RngStream stream,
                          long max_attempts = 1000000) {
    if (m_draws < 1) throw ValidationError("e_step: M must be >= 1");
    LatentDraws draws;
    draws.items_state.assign(items.begin(), items.end());
    draws.pop_state = pop;
    draws.m_draws = m_draws;
    draws.by_individual.resize(data.individuals.size());
    draws.individual_ids.resize(data.individuals.size());
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        const auto& ind = data.individuals[j];
        draws.individual_ids[j] = ind.id;
        Rng rng(substream(stream, hash_key(ind.id)));
        const PosteriorEnvelope env = build_envelope(ind, items, pop);
        auto& out = draws.by_individual[j];
        out.resize(static_cast<std::size_t>(m_draws));
        for (auto& pair : out) {
            pair.theta = sample_theta(ind, env, items, pop, rng, max_attempts);
            pair.tau = sample_tau_given_theta(pair.theta, ind, items, pop, rng);
        }
    }
    return draws;
}

// Closed-form speed update: beta_i is the mean of (t_ij + tau) over draws and
// observing individuals; alpha_i^(-2) is the mean squared residual.
inline std::vector<std::pair<double, double>> m_step_speed(const LatentDraws& draws,
                                                           const Dataset& data) {
    const std::size_t n_items = data.items.size();
    const auto order = detail::reduction_order(data);
    std::vector<double> sum(n_items, 0.0);
    std::vector<long> count(n_items, 0);
    for (const std::size_t j : order) {
        const auto& ind = data.individuals[j];
        for (const auto& [idx, obs] : ind.observed) {
            const auto i = static_cast<std::size_t>(idx);
            for (const auto& pair : draws.by_individual[j]) {
                sum[i] += obs.log_time + pair.tau;
            }
            count[i] += static_cast<long>(draws.by_individual[j].size());
        }
    }
    std::vector<std::pair<double, double>> out(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        if (count[i] == 0) {
            throw ValidationError("m_step_speed: item " + data.items[i].id +
                                  " has no observations");
        }
        out[i].second = sum[i] / static_cast<double>(count[i]);
    }
    std::vector<double> ssr(n_items, 0.0);
    for (const std::size_t j : order) {
        const auto& ind = data.individuals[j];
        for (const auto& [idx, obs] : ind.observed) {
            const auto i = static_cast<std::size_t>(idx);
            for (const auto& pair : draws.by_individual[j]) {
                const double r = obs.log_time - out[i].second + pair.tau;
                ssr[i] += r * r;
            }
        }
    }
    for (std::size_t i = 0; i < n_items; ++i) {
        out[i].first = ssr[i] > 0.0 ? std::sqrt(static_cast<double>(count[i]) / ssr[i])
                                    : kAlphaInfinity;
    }
    return out;
}

namespace detail {

struct AccuracyTermRef {
    double theta;
    int y;
    int n_words;
};

// Objective for one item's accuracy update, averaged over total word weight:
// concave in (slope, intercept) of the probit argument.
struct AccuracyObjective {
    const std::vector<AccuracyTermRef>& terms;
    double inv_weight;

    double value(double c1, double c0) const {
        double total = 0.0;
        for (const auto& t : terms) {
            total += probit_binomial_term(c1 * t.theta + c0, t.y, t.n_words);
        }
        return total * inv_weight;
    }

    void derivs(double c1, double c0, double& value, double g[2], double h[3]) const {
        value = 0.0;
        g[0] = g[1] = 0.0;
        h[0] = h[1] = h[2] = 0.0;
        for (const auto& t : terms) {
            const ProbitTermDerivs d =
                probit_binomial_term_derivs(c1 * t.theta + c0, t.y, t.n_words);
            value += d.value;
            g[0] += d.d1 * t.theta;
            g[1] += d.d1;
            h[0] += d.d2 * t.theta * t.theta;
            h[1] += d.d2 * t.theta;
            h[2] += d.d2;
        }
        value *= inv_weight;
        g[0] *= inv_weight;
        g[1] *= inv_weight;
        h[0] *= inv_weight;
        h[1] *= inv_weight;
        h[2] *= inv_weight;
    }
};

// Damped Newton ascent for the concave probit-binomial objective.
// Returns (c1, c0) with gradient below tol in the sup norm.
inline std::pair<double, double> maximize_accuracy(const AccuracyObjective& obj, double c1,
                                                   double c0, bool fix_c1,
                                                   const std::string& item_id) {
    constexpr int kMaxIter = 100;
    constexpr double kGradTol = 1e-8;
    double value = obj.value(c1, c0);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double v, g[2], h[3];
        obj.derivs(c1, c0, v, g, h);
        double step1 = 0.0, step0 = 0.0;
        if (fix_c1) {
            if (std::abs(g[1]) <= kGradTol) return {c1, c0};
            step0 = -g[1] / std::min(h[2], -1e-12);
        } else {
            if (std::max(std::abs(g[0]), std::abs(g[1])) <= kGradTol) return {c1, c0};
            const double det = h[0] * h[2] - h[1] * h[1];
            if (det > 1e-14 * std::abs(h[0] * h[2]) && h[0] < 0.0) {
                step1 = -(h[2] * g[0] - h[1] * g[1]) / det;
                step0 = -(-h[1] * g[0] + h[0] * g[1]) / det;
            } else {
                step1 = g[0];  // gradient ascent fallback near-degenerate curvature
                step0 = g[1];
            }
        }
        double scale = 1.0;
        bool improved = false;
        for (int halve = 0; halve < 60; ++halve) {
            const double new_c1 = c1 + scale * step1;
            const double new_c0 = c0 + scale * step0;
            const double new_value = obj.value(new_c1, new_c0);
            if (new_value > value) {
                c1 = new_c1;
                c0 = new_c0;
                value = new_value;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) {
            // no float-representable ascent left along the Newton direction
            return {c1, c0};
        }
    }
    double v, g[2], h[3];
    obj.derivs(c1, c0, v, g, h);
    const double gnorm = fix_c1 ? std::abs(g[1]) : std::max(std::abs(g[0]), std::abs(g[1]));
    if (gnorm > kGradTol) {
        throw NumericError("m_step_accuracy: Newton failed to converge for item " + item_id);
    }
    return {c1, c0};
}

}  // namespace detail

// Per-item accuracy update: maximize the Monte Carlo probit-binomial
// objective over the curve Phi(c1 theta + c0), reported as a = c1,
// b = -c0/c1, box-constrained to a in (1e-6, 50] and |b| <= 20. Boundary
// hits (separation) set the flag.
inline std::vector<std::pair<double, double>> m_step_accuracy(
    const LatentDraws& draws, const Dataset& data,
    const std::vector<std::pair<double, double>>& init = {}, bool* boundary_flag = nullptr) {
    const std::size_t n_items = data.items.size();
    std::vector<std::vector<detail::AccuracyTermRef>> terms(n_items);
    for (const std::size_t j : detail::reduction_order(data)) {
        const auto& ind = data.individuals[j];
        for (const auto& [idx, obs] : ind.observed) {
            const auto i = static_cast<std::size_t>(idx);
            for (const auto& pair : draws.by_individual[j]) {
                terms[i].push_back(
                    detail::AccuracyTermRef{pair.theta, obs.count, data.items[i].n_words});
            }
        }
    }
    std::vector<std::pair<double, double>> out(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        if (terms[i].empty()) {
            throw ValidationError("m_step_accuracy: item " + data.items[i].id +
                                  " has no observations");
        }
        double weight = 0.0;
        for (const auto& t : terms[i]) weight += t.n_words;
        const detail::AccuracyObjective obj{terms[i], 1.0 / weight};

        double c1 = 1.0, c0 = 0.0;
        if (i < init.size() && init[i].first > 0.0 && std::isfinite(init[i].first) &&
            std::isfinite(init[i].second)) {
            c1 = init[i].first;
            c0 = -init[i].first * init[i].second;
        }
        auto [m1, m0] = detail::maximize_accuracy(obj, c1, c0, false, data.items[i].id);
        double a = m1, c0_final = m0;
        if (a < 1e-6 || a > 50.0) {
            a = std::clamp(a, 1e-6, 50.0);
            // re-center the intercept under the clamped slope
            c0_final = detail::maximize_accuracy(obj, a, m0, true, data.items[i].id).second;
            if (boundary_flag) *boundary_flag = true;
        }
        double b = -c0_final / a;
        if (std::abs(b) > 20.0) {
            b = std::clamp(b, -20.0, 20.0);
            if (boundary_flag) *boundary_flag = true;
        }
        out[i] = {a, b};
    }
    return out;
}

// Constrained MLE of the latent covariance from the pooled draws, through the
// tau-on-theta regression: slope = sum(theta tau)/sum(theta^2), residual
// variance v, and sigma2_tau = v + slope^2.
inline PopulationParams m_step_covariance(const LatentDraws& draws) {
    std::vector<std::size_t> order(draws.by_individual.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    if (draws.individual_ids.size() == order.size()) {
        std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
            return draws.individual_ids[lhs] < draws.individual_ids[rhs];
        });
    }
    double s_tt = 0.0, s_tq = 0.0;
    long n_draws = 0;
    for (const std::size_t j : order) {
        for (const auto& pair : draws.by_individual[j]) {
            s_tt += pair.theta * pair.theta;
            s_tq += pair.theta * pair.tau;
            ++n_draws;
        }
    }
    if (n_draws < 2) throw ValidationError("m_step_covariance: need at least 2 draws");
    if (!(s_tt > 0.0)) throw NumericError("m_step_covariance: degenerate accuracy draws");
    const double slope = s_tq / s_tt;
    double rss = 0.0;
    for (const std::size_t j : order) {
        for (const auto& pair : draws.by_individual[j]) {
            const double r = pair.tau - slope * pair.theta;
            rss += r * r;
        }
    }
    const double v = rss / static_cast<double>(n_draws);
    if (!(v > 0.0)) {
        throw NumericError("m_step_covariance: zero residual variance (degenerate draws)");
    }
    PopulationParams pop;
    pop.sigma_theta_tau = slope;
    pop.sigma2_tau = v + slope * slope;
    return pop;
}

// Monte Carlo approximation of the EM objective for the given draws, up to
// an additive constant (binomial coefficients dropped).
inline double qhat(std::span<const ItemParams> items, const PopulationParams& pop,
                   const LatentDraws& draws, const Dataset& data) {
    pop.validate();
    const double inv_m = 1.0 / draws.m_draws;
    double total = 0.0;
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        const auto& ind = data.individuals[j];
        for (const auto& [idx, obs] : ind.observed) {
            const auto& item = items[static_cast<std::size_t>(idx)];
            if (!std::isfinite(item.alpha)) {
                throw NumericError("qhat: infinite alpha sentinel not supported");
            }
            double count_part = 0.0, time_part = 0.0;
            for (const auto& pair : draws.by_individual[j]) {
                count_part += probit_binomial_term(item.a * (pair.theta - item.b), obs.count,
                                                   item.n_words);
                const double r = obs.log_time - item.beta + pair.tau;
                time_part += r * r;
            }
            total += inv_m * count_part + std::log(item.alpha) -
                     0.5 * inv_m * item.alpha * item.alpha * time_part;
        }
    }
    const double v = pop.residual_var();
    double quad = 0.0;
    for (const auto& ind_draws : draws.by_individual) {
        for (const auto& pair : ind_draws) {
            quad += pop.sigma2_tau * pair.theta * pair.theta -
                    2.0 * pop.sigma_theta_tau * pair.theta * pair.tau + pair.tau * pair.tau;
        }
    }
    total -= 0.5 * data.individuals.size() * std::log(v);
    total -= 0.5 * inv_m * quad / v;
    return total;
}

namespace detail {

// Clamp an initializer into the region the E-step and the monitor can
// handle: finite alpha, boxed slope with the probit argument preserved.
// A degenerate (infinite or huge) moment estimate of alpha restarts from the
// interior; seeding the chain on the boundary ridge leaves it stranded there
// for the whole schedule.
inline bool sanitize_init(std::vector<ItemParams>& items, PopulationParams& pop) {
    bool changed = false;
    for (auto& item : items) {
        const double c0 = -item.a * item.b;
        double a = item.a;
        if (!(a >= 1e-6)) a = 1e-6;
        if (a > 50.0) a = 50.0;
        if (a != item.a) {
            item.a = a;
            item.b = -c0 / a;
            changed = true;
        }
        if (!std::isfinite(item.alpha) || item.alpha > 50.0) {
            item.alpha = 50.0;
            changed = true;
        }
    }
    const double bound = std::sqrt(pop.sigma2_tau);
    if (std::abs(pop.sigma_theta_tau) >= bound) {
        pop.sigma_theta_tau = std::copysign(std::max(bound - 1e-6, 0.0), pop.sigma_theta_tau);
        changed = true;
    }
    return changed;
}

inline double max_relative_change(const std::vector<ItemParams>& old_items,
                                  const PopulationParams& old_pop,
                                  const std::vector<ItemParams>& new_items,
                                  const PopulationParams& new_pop) {
    auto rel = [](double old_v, double new_v) {
        return std::abs(new_v - old_v) / std::max(std::abs(old_v), 0.1);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < old_items.size(); ++i) {
        worst = std::max(worst, rel(old_items[i].a, new_items[i].a));
        worst = std::max(worst, rel(old_items[i].b, new_items[i].b));
        worst = std::max(worst, rel(old_items[i].alpha, new_items[i].alpha));
        worst = std::max(worst, rel(old_items[i].beta, new_items[i].beta));
    }
    worst = std::max(worst, rel(old_pop.sigma2_tau, new_pop.sigma2_tau));
    worst = std::max(worst, rel(old_pop.sigma_theta_tau, new_pop.sigma_theta_tau));
    return worst;
}

}  // namespace detail

// Full MCEM run over the staged schedule. Fresh draws every iteration; the
// monitored observed-data log-likelihood is recorded per iteration. The
// whole schedule always runs (the trace row count equals the scheduled
// iteration count); rel_tol only feeds the converged diagnostic.
inline FitResult fit_mcem(const Dataset& data, const FitResult& init, const McemConfig& cfg) {
    cfg.validate();
    data.validate();
    if (init.items.size() != data.items.size()) {
        throw ValidationError("fit_mcem: initializer item count does not match the dataset");
    }

    FitResult fit;
    fit.items = init.items;
    fit.pop = init.pop;
    fit.diagnostics.init_clamped = detail::sanitize_init(fit.items, fit.pop);
    fit.pop.validate();
    for (auto& item : fit.items) item.validate();

    fit.diagnostics.init_loglik =
        observed_loglik(data, fit.items, fit.pop, cfg.monitor_quad_order);
    fit.diagnostics.have_init_loglik = true;

    std::vector<double> increments;
    double prev_loglik = fit.diagnostics.init_loglik;
    int iteration = 0;
    const int final_stage = static_cast<int>(cfg.schedule.size()) - 1;
    for (int stage = 0; stage <= final_stage; ++stage) {
        const auto [stage_iters, m_draws] = cfg.schedule[static_cast<std::size_t>(stage)];
        for (int k = 0; k < stage_iters; ++k) {
            ++iteration;
            const LatentDraws draws =
                e_step(data, fit.items, fit.pop, m_draws,
                       substream(cfg.seed, static_cast<std::uint64_t>(iteration)),
                       cfg.max_rejection_attempts);
            const double q_before = qhat(fit.items, fit.pop, draws, data);

            const auto speed = m_step_speed(draws, data);
            std::vector<std::pair<double, double>> warm(fit.items.size());
            for (std::size_t i = 0; i < fit.items.size(); ++i) {
                warm[i] = {fit.items[i].a, fit.items[i].b};
            }
            const auto accuracy =
                m_step_accuracy(draws, data, warm, &fit.diagnostics.accuracy_boundary);
            const PopulationParams new_pop = m_step_covariance(draws);

            std::vector<ItemParams> new_items = fit.items;
            for (std::size_t i = 0; i < new_items.size(); ++i) {
                new_items[i].a = accuracy[i].first;
                new_items[i].b = accuracy[i].second;
                new_items[i].alpha = speed[i].first;
                new_items[i].beta = speed[i].second;
                if (!std::isfinite(new_items[i].alpha)) {
                    throw NumericError("fit_mcem: degenerate zero-residual speed update for item " +
                                       data.items[i].id);
                }
            }

            const double q_after = qhat(new_items, new_pop, draws, data);
            if (q_after < q_before - 1e-9 * (1.0 + std::abs(q_before))) {
                fit.diagnostics.qhat_monotone = false;
            }

            const double loglik =
                observed_loglik(data, new_items, new_pop, cfg.monitor_quad_order);
            const double increment = loglik - prev_loglik;
            if (increments.size() >= 3) {
                double mean = 0.0;
                for (double inc : increments) mean += inc;
                mean /= static_cast<double>(increments.size());
                double var = 0.0;
                for (double inc : increments) var += (inc - mean) * (inc - mean);
                const double sd = std::sqrt(var / (increments.size() - 1.0));
                if (increment < -3.0 * std::max(sd, 1e-12)) {
                    fit.diagnostics.loglik_decreased = true;
                }
            }
            increments.push_back(increment);
            prev_loglik = loglik;

            if (stage == final_stage &&
                detail::max_relative_change(fit.items, fit.pop, new_items, new_pop) <
                    cfg.rel_tol) {
                fit.diagnostics.converged = true;
            }

            fit.items = std::move(new_items);
            fit.pop = new_pop;
            fit.diagnostics.trace.push_back(
                IterationRecord{iteration, m_draws, loglik, fit.items, fit.pop});
        }
    }
    return fit;
}

}  // namespace orf
