#pragma once

// Replicate study harness: repeated simulate -> fit (-> score) runs with
// per-parameter sqrt(n)-scaled average standard errors and RMSEs, plus mean
// trait-recovery correlations, in the usual benchmark layout.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "orf/mcem.hpp"
#include "orf/mom.hpp"
#include "orf/scoring.hpp"
#include "orf/simulate.hpp"
#include "orf/types.hpp"

namespace orf {

enum class StudyMethod { Mom, Mcem, Both };

struct StudyConfig {
    int scenario = 2;
    int n = 40;
    int replicates = 100;
    StudyMethod method = StudyMethod::Both;
    RngStream seed;
    double missing_rate = 0.0;
    int score_m = 20;  // draws per individual for EAP scoring
    McemConfig mcem;   // seed field is overridden per replicate
};

// Aggregated accuracy of one parameter family for one method.
struct ParamSummary {
    double sqrtn_ase = 0.0;
    double sqrtn_armse = 0.0;
    int excluded = 0;  // non-finite estimates dropped from the aggregation
};

struct MethodSummary {
    bool present = false;
    // order: a, b, alpha, beta, sigma2_tau, sigma_theta_tau
    std::array<ParamSummary, 6> params{};
    double mean_cor_theta = 0.0;
    double mean_cor_tau = 0.0;
};

struct ReplicateFlags {
    bool qhat_monotone = true;
    bool loglik_improved = true;  // final monitored loglik >= at the initializer
};

struct StudyResult {
    MethodSummary mom;
    MethodSummary mcem;
    std::vector<ReplicateFlags> mcem_flags;
    int replicates_run = 0;
    int replicates_failed = 0;
    std::vector<std::string> failures;
};

inline const std::array<std::string, 6>& study_param_names() {
    static const std::array<std::string, 6> names = {"a",    "b",          "alpha",
                                                     "beta", "sigma2_tau", "sigma_theta_tau"};
    return names;
}

namespace detail {

// Per-replicate raw estimates for one method.
struct MethodDraws {
    // params[p][item] collects one value per successful replicate
    std::array<std::vector<std::vector<double>>, 6> params;
    std::vector<double> cor_theta;
    std::vector<double> cor_tau;

    void init(std::size_t n_items) {
        for (std::size_t p = 0; p < 4; ++p) {
            params[p].assign(n_items, {});
        }
        params[4].assign(1, {});
        params[5].assign(1, {});
    }

    void record(const FitResult& fit) {
        for (std::size_t i = 0; i < fit.items.size(); ++i) {
            params[0][i].push_back(fit.items[i].a);
            params[1][i].push_back(fit.items[i].b);
            params[2][i].push_back(fit.items[i].alpha);
            params[3][i].push_back(fit.items[i].beta);
        }
        params[4][0].push_back(fit.pop.sigma2_tau);
        params[5][0].push_back(fit.pop.sigma_theta_tau);
    }
};

inline std::array<double, 6> true_values(const Scenario& scenario) {
    return {scenario.items[0].a,     scenario.items[0].b,
            scenario.items[0].alpha, scenario.items[0].beta,
            scenario.pop.sigma2_tau, scenario.pop.sigma_theta_tau};
}

inline MethodSummary summarize(const MethodDraws& draws, const std::array<double, 6>& truth,
                               int n) {
    MethodSummary summary;
    summary.present = true;
    const double scale = std::sqrt(static_cast<double>(n));
    for (std::size_t p = 0; p < 6; ++p) {
        double ase_sum = 0.0, armse_sum = 0.0;
        int excluded = 0;
        for (const auto& series : draws.params[p]) {
            double sum = 0.0, sq_err = 0.0;
            int m = 0;
            for (double est : series) {
                if (!std::isfinite(est)) {
                    ++excluded;
                    continue;
                }
                sum += est;
                sq_err += (est - truth[p]) * (est - truth[p]);
                ++m;
            }
            if (m < 2) continue;
            const double mean = sum / m;
            double var = 0.0;
            for (double est : series) {
                if (!std::isfinite(est)) continue;
                var += (est - mean) * (est - mean);
            }
            ase_sum += std::sqrt(var / (m - 1));
            armse_sum += std::sqrt(sq_err / m);
        }
        const auto n_series = static_cast<double>(draws.params[p].size());
        summary.params[p].sqrtn_ase = scale * ase_sum / n_series;
        summary.params[p].sqrtn_armse = scale * armse_sum / n_series;
        summary.params[p].excluded = excluded;
    }
    if (!draws.cor_theta.empty()) {
        double st = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < draws.cor_theta.size(); ++r) {
            st += draws.cor_theta[r];
            sq += draws.cor_tau[r];
        }
        summary.mean_cor_theta = st / static_cast<double>(draws.cor_theta.size());
        summary.mean_cor_tau = sq / static_cast<double>(draws.cor_tau.size());
    }
    return summary;
}

}  // namespace detail

inline StudyResult run_replicate_study(const StudyConfig& cfg) {
    if (cfg.replicates < 1) throw ValidationError("run_replicate_study: replicates must be >= 1");
    const Scenario scenario = table1_scenario(cfg.scenario);
    const std::size_t n_items = scenario.items.size();

    detail::MethodDraws mom_draws, mcem_draws;
    mom_draws.init(n_items);
    mcem_draws.init(n_items);

    StudyResult result;
    const bool want_mom = cfg.method != StudyMethod::Mcem;
    const bool want_mcem = cfg.method != StudyMethod::Mom;

    for (int r = 0; r < cfg.replicates; ++r) {
        const RngStream rep_stream = substream(cfg.seed, static_cast<std::uint64_t>(r + 1));
        try {
            SimConfig sim;
            sim.items = scenario.items;
            sim.pop = scenario.pop;
            sim.n = cfg.n;
            sim.missing_rate = cfg.missing_rate;
            sim.seed = substream(rep_stream, std::uint64_t{1});
            const SimResult sim_result = simulate_dataset(sim);

            // compute everything first, commit only complete replicates
            const FitResult mom_fit = fit_mom(sim_result.data);
            double mom_ct = 0.0, mom_cq = 0.0;
            if (want_mom) {
                const ScoreTable scores = eap_scores(sim_result.data, mom_fit, cfg.score_m,
                                                     substream(rep_stream, std::uint64_t{3}));
                std::tie(mom_ct, mom_cq) = recovery_correlations(sim_result.latents, scores);
            }
            FitResult ml_fit;
            double ml_ct = 0.0, ml_cq = 0.0;
            if (want_mcem) {
                McemConfig mcem_cfg = cfg.mcem;
                mcem_cfg.seed = substream(rep_stream, std::uint64_t{2});
                ml_fit = fit_mcem(sim_result.data, mom_fit, mcem_cfg);
                const ScoreTable scores = eap_scores(sim_result.data, ml_fit, cfg.score_m,
                                                     substream(rep_stream, std::uint64_t{4}));
                std::tie(ml_ct, ml_cq) = recovery_correlations(sim_result.latents, scores);
            }

            if (want_mom) {
                mom_draws.record(mom_fit);
                mom_draws.cor_theta.push_back(mom_ct);
                mom_draws.cor_tau.push_back(mom_cq);
            }
            if (want_mcem) {
                mcem_draws.record(ml_fit);
                mcem_draws.cor_theta.push_back(ml_ct);
                mcem_draws.cor_tau.push_back(ml_cq);
                ReplicateFlags flags;
                flags.qhat_monotone = ml_fit.diagnostics.qhat_monotone;
                flags.loglik_improved =
                    !ml_fit.diagnostics.trace.empty() &&
                    ml_fit.diagnostics.trace.back().loglik >= ml_fit.diagnostics.init_loglik;
                result.mcem_flags.push_back(flags);
            }
            ++result.replicates_run;
        } catch (const std::exception& e) {
            ++result.replicates_failed;
            result.failures.push_back("replicate " + std::to_string(r + 1) + ": " + e.what());
        }
    }

    const auto truth = detail::true_values(scenario);
    if (want_mom) result.mom = detail::summarize(mom_draws, truth, cfg.n);
    if (want_mcem) result.mcem = detail::summarize(mcem_draws, truth, cfg.n);
    return result;
}

}  // namespace orf
