#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "orf/mom.hpp"
#include "orf/scoring.hpp"
#include "orf/simulate.hpp"
#include "test_helpers.hpp"

using namespace orf;
using namespace orf_test;

namespace {

FitResult make_fit(std::vector<ItemParams> items, PopulationParams pop) {
    FitResult fit;
    fit.items = std::move(items);
    fit.pop = pop;
    return fit;
}

// posterior means of both traits by brute-force 2-D grid integration
std::pair<double, double> grid_posterior_means(const Individual& ind,
                                               std::span<const ItemParams> items,
                                               const PopulationParams& pop) {
    const auto theta_grid = uniform_grid(-8.0, 8.0, 1201);
    const auto tau_grid = uniform_grid(-5.0, 5.0, 1401);
    double mass = 0.0, sum_theta = 0.0, sum_tau = 0.0;
    for (std::size_t g = 0; g < theta_grid.size(); ++g) {
        const double wt = simpson_weight(static_cast<int>(g), 1200);
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            const double wk = simpson_weight(static_cast<int>(k), 1400);
            const double density = std::exp(
                raw_joint_logdensity(theta_grid[g], tau_grid[k], ind, items, pop));
            mass += wt * wk * density;
            sum_theta += wt * wk * theta_grid[g] * density;
            sum_tau += wt * wk * tau_grid[k] * density;
        }
    }
    return {sum_theta / mass, sum_tau / mass};
}

}  // namespace

TEST(EapScores, PriorMeanForEmptyObservations) {
    Dataset data;
    data.items = {Item{"i1", 20}};
    data.individuals = {Individual{"empty", {}}};
    const FitResult fit =
        make_fit({{1.0, 0.0, 5.0, 0.0, 20}}, PopulationParams{0.0584, -0.181});
    const ScoreTable table = eap_scores(data, fit, 10000, RngStream{601, 0});
    // prior means are zero; SE of the average of 1e4 prior draws
    EXPECT_NEAR(table.rows[0].theta_hat, 0.0, 3.0 / std::sqrt(10000.0));
    EXPECT_NEAR(table.rows[0].tau_hat, 0.0, 3.0 * std::sqrt(0.0584) / std::sqrt(10000.0));
}

TEST(EapScores, DeterministicGivenSeed) {
    const Scenario s2 = table1_scenario(2);
    SimConfig sim;
    sim.items = s2.items;
    sim.pop = s2.pop;
    sim.n = 30;
    sim.seed = RngStream{603, 0};
    const SimResult data = simulate_dataset(sim);
    const FitResult fit = make_fit(s2.items, s2.pop);
    const ScoreTable a = eap_scores(data.data, fit, 50, RngStream{604, 2});
    const ScoreTable b = eap_scores(data.data, fit, 50, RngStream{604, 2});
    for (std::size_t j = 0; j < a.rows.size(); ++j) {
        EXPECT_EQ(a.rows[j].theta_hat, b.rows[j].theta_hat);
        EXPECT_EQ(a.rows[j].tau_hat, b.rows[j].tau_hat);
    }
}

TEST(EapScores, MatchQuadraturePosteriorMeans) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}, {1.4, 0.3, 4.0, 0.2, 12}};
    PopulationParams pop{0.24155 * 0.24155, -0.18116};
    Dataset data;
    data.items = {Item{"i1", 25}, Item{"i2", 12}};
    data.individuals = {
        Individual{"a", {{0, Observation{21, -1.71}}, {1, Observation{8, 0.25}}}},
        Individual{"b", {{0, Observation{14, -1.42}}}},
    };
    const FitResult fit = make_fit(items, pop);
    const ScoreTable table = eap_scores(data, fit, 10000, RngStream{605, 0});
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        const auto [mean_theta, mean_tau] =
            grid_posterior_means(data.individuals[j], items, pop);
        // posterior sd is below 1 for theta and ~0.2 for tau; 3 MC SEs
        EXPECT_NEAR(table.rows[j].theta_hat, mean_theta, 3.0 / std::sqrt(10000.0));
        EXPECT_NEAR(table.rows[j].tau_hat, mean_tau, 3.0 * 0.3 / std::sqrt(10000.0));
    }
}

TEST(EapScores, StableAcrossSeedsAtLargeM) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}};
    PopulationParams pop{0.0584, -0.181};
    Dataset data;
    data.items = {Item{"i1", 25}};
    data.individuals = {Individual{"a", {{0, Observation{19, -1.55}}}}};
    const FitResult fit = make_fit(items, pop);
    std::vector<double> estimates;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        estimates.push_back(
            eap_scores(data, fit, 10000, RngStream{700 + seed, 0}).rows[0].theta_hat);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= 10.0;
    double sd = 0.0;
    for (double e : estimates) sd += (e - mean) * (e - mean);
    sd = std::sqrt(sd / 9.0);
    EXPECT_LT(sd, 0.02);
}

TEST(RecoveryCorrelations, IdentityAndErrors) {
    ScoreTable table;
    std::vector<LatentPair> truth;
    for (int j = 0; j < 40; ++j) {
        const double theta = 0.1 * j - 2.0;
        const double tau = 0.05 * j - 1.0;
        truth.push_back(LatentPair{theta, tau});
        table.rows.push_back(ScoreRow{"s" + std::to_string(j), theta, tau});
    }
    const auto [ct, cq] = recovery_correlations(truth, table);
    EXPECT_NEAR(ct, 1.0, 1e-12);
    EXPECT_NEAR(cq, 1.0, 1e-12);

    ScoreTable flat = table;
    for (auto& row : flat.rows) row.theta_hat = 0.5;
    EXPECT_THROW(recovery_correlations(truth, flat), ValidationError);
    ScoreTable short_table;
    short_table.rows.resize(3);
    EXPECT_THROW(recovery_correlations(truth, short_table), ValidationError);
}

TEST(LooScores, NoopWhenItemUnobserved) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}, {1.4, 0.3, 4.0, 0.2, 12}};
    PopulationParams pop{0.0584, -0.181};
    Dataset data;
    data.items = {Item{"i1", 25}, Item{"i2", 12}};
    data.individuals = {Individual{"a", {{0, Observation{21, -1.71}}}},
                        Individual{"b", {{0, Observation{14, -1.42}}}}};
    const FitResult fit = make_fit(items, pop);
    const ScoreTable base = eap_scores(data, fit, 200, RngStream{610, 0});
    const ScoreTable loo = loo_scores(data, fit, 1, 200, RngStream{610, 0});
    for (std::size_t j = 0; j < base.rows.size(); ++j) {
        EXPECT_EQ(base.rows[j].theta_hat, loo.rows[j].theta_hat);
        EXPECT_EQ(base.rows[j].tau_hat, loo.rows[j].tau_hat);
    }
}

TEST(LooScores, RemovingOnlyItemGivesPriorScores) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}};
    PopulationParams pop{0.0584, -0.181};
    Dataset data;
    data.items = {Item{"i1", 25}};
    data.individuals = {Individual{"a", {{0, Observation{21, -1.71}}}}};
    const FitResult fit = make_fit(items, pop);
    const ScoreTable loo = loo_scores(data, fit, 0, 10000, RngStream{611, 0});
    EXPECT_NEAR(loo.rows[0].theta_hat, 0.0, 3.0 / std::sqrt(10000.0));
    EXPECT_NEAR(loo.rows[0].tau_hat, 0.0, 3.0 * std::sqrt(0.0584) / std::sqrt(10000.0));
}

TEST(LooScores, HeldOutValuesNeverRead) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}, {1.4, 0.3, 4.0, 0.2, 12}};
    PopulationParams pop{0.0584, -0.181};
    Dataset data;
    data.items = {Item{"i1", 25}, Item{"i2", 12}};
    data.individuals = {
        Individual{"a", {{0, Observation{21, -1.71}}, {1, Observation{8, 0.25}}}},
        Individual{"b", {{0, Observation{14, -1.42}}, {1, Observation{5, 0.31}}}},
    };
    const FitResult fit = make_fit(items, pop);
    const ScoreTable before = loo_scores(data, fit, 0, 300, RngStream{612, 0});
    // mangle the held-out item's values; loo scores must be bit-identical
    for (auto& ind : data.individuals) {
        ind.observed[0] = Observation{3, 99.0};
    }
    const ScoreTable after = loo_scores(data, fit, 0, 300, RngStream{612, 0});
    for (std::size_t j = 0; j < before.rows.size(); ++j) {
        EXPECT_EQ(before.rows[j].theta_hat, after.rows[j].theta_hat);
        EXPECT_EQ(before.rows[j].tau_hat, after.rows[j].tau_hat);
    }
}

TEST(LooScores, MatchQuadratureOnReducedItemSet) {
    std::vector<ItemParams> items = {{0.9, -1.2, 6.0, -1.6, 25}, {1.4, 0.3, 4.0, 0.2, 12}};
    PopulationParams pop{0.24155 * 0.24155, -0.18116};
    Dataset data;
    data.items = {Item{"i1", 25}, Item{"i2", 12}};
    data.individuals = {
        Individual{"a", {{0, Observation{21, -1.71}}, {1, Observation{8, 0.25}}}},
    };
    const FitResult fit = make_fit(items, pop);
    const ScoreTable loo = loo_scores(data, fit, 1, 10000, RngStream{613, 0});
    Individual reduced = data.individuals[0];
    reduced.observed.erase(1);
    const auto [mean_theta, mean_tau] = grid_posterior_means(reduced, items, pop);
    EXPECT_NEAR(loo.rows[0].theta_hat, mean_theta, 3.0 / std::sqrt(10000.0));
    EXPECT_NEAR(loo.rows[0].tau_hat, mean_tau, 3.0 * 0.3 / std::sqrt(10000.0));
}

TEST(Predict, PlugInIdentityWhenScoresMatchMarginal) {
    std::vector<ItemParams> items = {{1.1, -0.9, 6.0, -1.5, 25}};
    PopulationParams pop{0.0584, -0.181};
    Dataset data;
    data.items = {Item{"i1", 25}};
    data.individuals = {Individual{"a", {{0, Observation{21, -1.71}}}},
                        Individual{"b", {{0, Observation{17, -1.35}}}}};
    const FitResult fit = make_fit(items, pop);
    // scores whose probit argument reproduces the marginal one
    const ItemParams& item = items[0];
    const double theta_star = item.b - item.b / std::sqrt(1.0 + item.a * item.a);
    ScoreTable loo;
    loo.rows = {ScoreRow{"a", theta_star, 0.3}, ScoreRow{"b", theta_star, -0.2}};
    const PredictionRow row = predict(data, fit, 0, loo);
    EXPECT_NEAR(row.rspe0_count, row.rspe1_count, 1e-12);
    EXPECT_GT(row.rspe0_time, 0.0);
    EXPECT_GT(row.rspe1_time, 0.0);
}

TEST(Predict, HandComputedToyCase) {
    std::vector<ItemParams> items = {{1.0, 0.0, 2.0, 0.0, 10}};
    PopulationParams pop{0.25, 0.1};
    Dataset data;
    data.items = {Item{"i1", 10}};
    data.individuals = {
        Individual{"a", {{0, Observation{6, std::log(1.2)}}}},
        Individual{"b", {{0, Observation{8, std::log(0.8)}}}},
        Individual{"c", {{0, Observation{4, std::log(1.5)}}}},
    };
    const FitResult fit = make_fit(items, pop);
    ScoreTable loo;
    loo.rows = {ScoreRow{"a", 0.5, -0.2}, ScoreRow{"b", 1.0, 0.3}, ScoreRow{"c", -0.5, -0.4}};
    const PredictionRow row = predict(data, fit, 0, loo);

    // marginal predictors
    const double y0 = 10.0 * oracle_Phi(0.0);  // 5
    const double t0 = std::exp(0.0 + 0.25 / 2.0 + 1.0 / 8.0);
    // trait-informed predictors per individual
    const double y1[3] = {10.0 * oracle_Phi(0.5), 10.0 * oracle_Phi(1.0),
                          10.0 * oracle_Phi(-0.5)};
    const double t1[3] = {std::exp(0.2 + 0.125), std::exp(-0.3 + 0.125),
                          std::exp(0.4 + 0.125)};
    const double y[3] = {6.0, 8.0, 4.0};
    const double t[3] = {1.2, 0.8, 1.5};
    double se0_y = 0.0, se1_y = 0.0, se0_t = 0.0, se1_t = 0.0;
    for (int j = 0; j < 3; ++j) {
        se0_y += (y[j] - y0) * (y[j] - y0);
        se1_y += (y[j] - y1[j]) * (y[j] - y1[j]);
        se0_t += (t[j] - t0) * (t[j] - t0);
        se1_t += (t[j] - t1[j]) * (t[j] - t1[j]);
    }
    EXPECT_NEAR(row.rspe0_count, std::sqrt(se0_y / 3.0), 1e-10);
    EXPECT_NEAR(row.rspe1_count, std::sqrt(se1_y / 3.0), 1e-10);
    EXPECT_NEAR(row.rspe0_time, std::sqrt(se0_t / 3.0), 1e-10);
    EXPECT_NEAR(row.rspe1_time, std::sqrt(se1_t / 3.0), 1e-10);
    EXPECT_NEAR(row.rel_decrease_count, 1.0 - row.rspe1_count / row.rspe0_count, 1e-12);
    EXPECT_EQ(row.n_eval, 3);
}

TEST(Predict, InfiniteAlphaDropsMeasurementTerm) {
    std::vector<ItemParams> items = {{1.0, 0.0, kAlphaInfinity, -0.5, 10}};
    PopulationParams pop{0.25, 0.1};
    Dataset data;
    data.items = {Item{"i1", 10}};
    data.individuals = {Individual{"a", {{0, Observation{6, -0.4}}}}};
    const FitResult fit = make_fit(items, pop);
    ScoreTable loo;
    loo.rows = {ScoreRow{"a", 0.0, 0.1}};
    const PredictionRow row = predict(data, fit, 0, loo);
    // T-hat(1) = exp(beta - tau_hat) with the 1/(2 alpha^2) term vanished
    const double expected = std::exp(-0.5 - 0.1);
    EXPECT_NEAR(row.rspe1_time, std::abs(std::exp(-0.4) - expected), 1e-12);
}

TEST(Predict, EmptyEvaluationSetErrors) {
    std::vector<ItemParams> items = {{1.0, 0.0, 5.0, 0.0, 10}, {1.0, 0.0, 5.0, 0.0, 10}};
    PopulationParams pop{0.25, 0.1};
    Dataset data;
    data.items = {Item{"i1", 10}, Item{"i2", 10}};
    data.individuals = {Individual{"a", {{0, Observation{6, -0.4}}}}};
    const FitResult fit = make_fit(items, pop);
    ScoreTable loo;
    loo.rows = {ScoreRow{"a", 0.0, 0.0}};
    EXPECT_THROW(predict(data, fit, 1, loo), ValidationError);
    EXPECT_THROW(predict(data, fit, 5, loo), ValidationError);
}

// simulated leave-one-out study: trait-informed predictors win on most items
TEST(Predict, TraitInformationImprovesPrediction) {
    const Scenario s2 = table1_scenario(2);
    SimConfig sim;
    sim.items = s2.items;
    sim.pop = s2.pop;
    sim.n = 250;
    sim.seed = RngStream{617, 0};
    const SimResult data = simulate_dataset(sim);
    const FitResult fit = fit_mom(data.data);
    int improved_count = 0, improved_time = 0;
    for (int i = 0; i < 4; ++i) {
        const ScoreTable loo =
            loo_scores(data.data, fit, i, 20, substream(RngStream{618, 0}, data.data.items[static_cast<std::size_t>(i)].id));
        const PredictionRow row = predict(data.data, fit, i, loo);
        if (row.rspe1_count < row.rspe0_count) ++improved_count;
        if (row.rspe1_time < row.rspe0_time) ++improved_time;
        EXPECT_GT(row.rspe0_count, 0.0);
        EXPECT_GT(row.rspe0_time, 0.0);
    }
    EXPECT_GE(improved_count, 3);
    EXPECT_GE(improved_time, 4);
}
