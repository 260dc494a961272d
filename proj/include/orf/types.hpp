#pragma once

// Domain types shared across the library: item and population parameters,
// datasets with jointly-missing (count, log-time) pairs, and fit results.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "orf/errors.hpp"

namespace orf {

inline constexpr double kAlphaInfinity = std::numeric_limits<double>::infinity();

// Per-item parameters: probit accuracy curve (a, b), log-time precision and
// intensity (alpha, beta), and the item word count. alpha may carry the
// +infinity sentinel meaning zero residual time variance.
struct ItemParams {
    double a = 1.0;
    double b = 0.0;
    double alpha = 1.0;
    double beta = 0.0;
    int n_words = 1;

    void validate() const {
        if (!(a > 0.0) || !std::isfinite(a)) {
            throw ValidationError("ItemParams: a must be positive and finite");
        }
        if (!std::isfinite(b)) throw ValidationError("ItemParams: b must be finite");
        if (!(alpha > 0.0)) throw ValidationError("ItemParams: alpha must be positive");
        if (!std::isfinite(beta)) throw ValidationError("ItemParams: beta must be finite");
        if (n_words < 1) throw ValidationError("ItemParams: n_words must be >= 1");
    }
};

// Free parameters of the latent covariance. Means are fixed at zero and the
// accuracy-trait variance at one, so the full covariance is
// [[1, sigma_theta_tau], [sigma_theta_tau, sigma2_tau]].
struct PopulationParams {
    double sigma2_tau = 1.0;
    double sigma_theta_tau = 0.0;

    // Var(tau | theta); positive iff the latent covariance is PD.
    double residual_var() const { return sigma2_tau - sigma_theta_tau * sigma_theta_tau; }

    double correlation() const { return sigma_theta_tau / std::sqrt(sigma2_tau); }

    void validate() const {
        if (!(sigma2_tau > 0.0) || !std::isfinite(sigma2_tau)) {
            throw ValidationError("PopulationParams: sigma2_tau must be positive and finite");
        }
        if (!std::isfinite(sigma_theta_tau)) {
            throw ValidationError("PopulationParams: sigma_theta_tau must be finite");
        }
        if (!(residual_var() > 0.0)) {
            throw ValidationError("PopulationParams: latent covariance is not positive definite");
        }
    }
};

struct LatentPair {
    double theta = 0.0;
    double tau = 0.0;
};

struct Item {
    std::string id;
    int n_words = 1;
};

// One observed (count, log-time) pair. Items absent from an individual's map
// are jointly missing.
struct Observation {
    int count = 0;
    double log_time = 0.0;
};

struct Individual {
    std::string id;
    std::map<int, Observation> observed;  // keyed by item index
};

struct Dataset {
    std::vector<Item> items;
    std::vector<Individual> individuals;

    std::size_t n_items() const { return items.size(); }
    std::size_t n_individuals() const { return individuals.size(); }

    void validate() const {
        for (const auto& item : items) {
            if (item.n_words < 1) {
                throw ValidationError("Dataset: item " + item.id + " has n_words < 1");
            }
        }
        for (const auto& ind : individuals) {
            for (const auto& [idx, obs] : ind.observed) {
                if (idx < 0 || static_cast<std::size_t>(idx) >= items.size()) {
                    throw ValidationError("Dataset: individual " + ind.id +
                                          " references an unknown item index");
                }
                if (obs.count < 0 || obs.count > items[static_cast<std::size_t>(idx)].n_words) {
                    throw ValidationError("Dataset: count out of range for individual " +
                                          ind.id + ", item " +
                                          items[static_cast<std::size_t>(idx)].id);
                }
                if (!std::isfinite(obs.log_time)) {
                    throw ValidationError("Dataset: non-finite log-time for individual " +
                                          ind.id);
                }
            }
        }
    }
};

// One row of the MCEM iteration trace.
struct IterationRecord {
    int iteration = 0;
    int m_draws = 0;
    double loglik = 0.0;
    std::vector<ItemParams> items;
    PopulationParams pop;
};

struct FitDiagnostics {
    std::vector<IterationRecord> trace;
    double init_loglik = 0.0;        // monitored log-likelihood at the initializer
    bool have_init_loglik = false;
    bool converged = false;          // final-stage relative change fell below rel_tol
    bool pd_repaired = false;        // covariance shrunk back to the PD region
    bool sigma2_tau_clamped = false; // non-positive moment estimate raised to a floor
    bool accuracy_boundary = false;  // accuracy maximizer hit its box (separation)
    bool init_clamped = false;       // initializer sanitized before the first E-step
    bool loglik_decreased = false;   // monitored log-likelihood dropped beyond noise
    int infinite_alpha_count = 0;    // speed estimates at the infinity sentinel
    bool qhat_monotone = true;       // every M-step improved its own Q-hat
};

struct FitResult {
    std::vector<ItemParams> items;
    PopulationParams pop;
    FitDiagnostics diagnostics;
};

}  // namespace orf
