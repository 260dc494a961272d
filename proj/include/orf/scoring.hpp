#pragma once

// Latent-trait scoring and leave-item-out prediction. EAP scores average M
// posterior draws from the same samplers the E-step uses; the prediction
// report compares marginal predictors against trait-informed ones through
// root square prediction errors on counts and raw times.

#include <cmath>
#include <string>
#include <vector>

#include "orf/mcem.hpp"
#include "orf/model.hpp"
#include "orf/rng.hpp"
#include "orf/types.hpp"

namespace orf {

struct ScoreRow {
    std::string individual_id;
    double theta_hat = 0.0;
    double tau_hat = 0.0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
    int m_draws = 0;
    RngStream seed;
};

namespace detail {

inline ScoreTable eap_core(const std::vector<Individual>& individuals,
                           std::span<const ItemParams> items, const PopulationParams& pop,
                           int m_draws, RngStream seed) {
    if (m_draws < 1) throw ValidationError("eap_scores: M must be >= 1");
    // The infinity speed-precision sentinel (possible in moment fits) would
    // put a point mass into the samplers; a large finite cap is its working
    // limit.
    std::vector<ItemParams> working(items.begin(), items.end());
    for (auto& item : working) {
        if (!std::isfinite(item.alpha) || item.alpha > 1e3) item.alpha = 1e3;
    }
    ScoreTable table;
    table.m_draws = m_draws;
    table.seed = seed;
    table.rows.resize(individuals.size());
    for (std::size_t j = 0; j < individuals.size(); ++j) {
        const auto& ind = individuals[j];
        Rng rng(substream(seed, hash_key(ind.id)));
        const PosteriorEnvelope env = build_envelope(ind, working, pop);
        double sum_theta = 0.0, sum_tau = 0.0;
        for (int m = 0; m < m_draws; ++m) {
            const double theta = sample_theta(ind, env, working, pop, rng);
            const double tau = sample_tau_given_theta(theta, ind, working, pop, rng);
            sum_theta += theta;
            sum_tau += tau;
        }
        table.rows[j] = ScoreRow{ind.id, sum_theta / m_draws, sum_tau / m_draws};
    }
    return table;
}

}  // namespace detail

// Posterior-mean trait estimates from M Monte Carlo draws per individual.
inline ScoreTable eap_scores(const Dataset& data, const FitResult& fit, int m_draws,
                             RngStream seed) {
    return detail::eap_core(data.individuals, fit.items, fit.pop, m_draws, seed);
}

// Pearson correlations between true latent traits and their estimates.
inline std::pair<double, double> recovery_correlations(std::span<const LatentPair> truth,
                                                       const ScoreTable& scores) {
    if (truth.size() != scores.rows.size() || truth.empty()) {
        throw ValidationError("recovery_correlations: size mismatch");
    }
    const auto n = static_cast<double>(truth.size());
    double mt = 0.0, mq = 0.0, me_t = 0.0, me_q = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        mt += truth[j].theta;
        mq += truth[j].tau;
        me_t += scores.rows[j].theta_hat;
        me_q += scores.rows[j].tau_hat;
    }
    mt /= n;
    mq /= n;
    me_t /= n;
    me_q /= n;
    double ctt = 0.0, vt = 0.0, vte = 0.0, cqq = 0.0, vq = 0.0, vqe = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        const double dt = truth[j].theta - mt;
        const double dq = truth[j].tau - mq;
        const double det = scores.rows[j].theta_hat - me_t;
        const double deq = scores.rows[j].tau_hat - me_q;
        ctt += dt * det;
        vt += dt * dt;
        vte += det * det;
        cqq += dq * deq;
        vq += dq * dq;
        vqe += deq * deq;
    }
    if (!(vt > 0.0) || !(vte > 0.0) || !(vq > 0.0) || !(vqe > 0.0)) {
        throw ValidationError("recovery_correlations: zero variance in scores or truth");
    }
    return {ctt / std::sqrt(vt * vte), cqq / std::sqrt(vq * vqe)};
}

// EAP scores with one item's observations removed from every individual.
// The held-out values never enter the samplers.
inline ScoreTable loo_scores(const Dataset& data, const FitResult& fit, int item_index,
                             int m_draws, RngStream seed) {
    if (item_index < 0 || static_cast<std::size_t>(item_index) >= data.items.size()) {
        throw ValidationError("loo_scores: item index out of range");
    }
    std::vector<Individual> reduced = data.individuals;
    for (auto& ind : reduced) ind.observed.erase(item_index);
    return detail::eap_core(reduced, fit.items, fit.pop, m_draws, seed);
}

struct PredictionRow {
    std::string item_id;
    double rspe0_count = 0.0;
    double rspe1_count = 0.0;
    double rspe0_time = 0.0;
    double rspe1_time = 0.0;
    double rel_decrease_count = 0.0;
    double rel_decrease_time = 0.0;
    int n_eval = 0;
};

// Leave-item-out prediction report for one item. The marginal predictors use
// only the item parameters; the trait-informed ones plug in the leave-item-out
// EAP scores. RSPE is evaluated over the individuals observing the item, on
// counts and on raw times.
inline PredictionRow predict(const Dataset& data, const FitResult& fit, int item_index,
                             const ScoreTable& loo) {
    if (item_index < 0 || static_cast<std::size_t>(item_index) >= data.items.size()) {
        throw ValidationError("predict: item index out of range");
    }
    if (loo.rows.size() != data.individuals.size()) {
        throw ValidationError("predict: score table does not match the dataset");
    }
    const auto i = static_cast<std::size_t>(item_index);
    const ItemParams& item = fit.items[i];
    const double meas = std::isfinite(item.alpha) ? 1.0 / (item.alpha * item.alpha) : 0.0;

    const double count_marginal = mean_count(item);
    const double time_marginal = std::exp(item.beta + 0.5 * fit.pop.sigma2_tau + 0.5 * meas);

    PredictionRow row;
    row.item_id = data.items[i].id;
    double se0_y = 0.0, se1_y = 0.0, se0_t = 0.0, se1_t = 0.0;
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        const auto obs = data.individuals[j].observed.find(item_index);
        if (obs == data.individuals[j].observed.end()) continue;
        const double y = obs->second.count;
        const double t_raw = std::exp(obs->second.log_time);
        const double count_scored =
            item.n_words * norm_cdf(item.a * (loo.rows[j].theta_hat - item.b));
        const double time_scored = std::exp(item.beta - loo.rows[j].tau_hat + 0.5 * meas);
        se0_y += (y - count_marginal) * (y - count_marginal);
        se1_y += (y - count_scored) * (y - count_scored);
        se0_t += (t_raw - time_marginal) * (t_raw - time_marginal);
        se1_t += (t_raw - time_scored) * (t_raw - time_scored);
        ++row.n_eval;
    }
    if (row.n_eval == 0) {
        throw ValidationError("predict: no individual observes item " + data.items[i].id);
    }
    row.rspe0_count = std::sqrt(se0_y / row.n_eval);
    row.rspe1_count = std::sqrt(se1_y / row.n_eval);
    row.rspe0_time = std::sqrt(se0_t / row.n_eval);
    row.rspe1_time = std::sqrt(se1_t / row.n_eval);
    row.rel_decrease_count =
        row.rspe0_count > 0.0 ? (row.rspe0_count - row.rspe1_count) / row.rspe0_count : 0.0;
    row.rel_decrease_time =
        row.rspe0_time > 0.0 ? (row.rspe0_time - row.rspe1_time) / row.rspe0_time : 0.0;
    return row;
}

}  // namespace orf
