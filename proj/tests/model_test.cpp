#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "orf/model.hpp"
#include "orf/types.hpp"
#include "test_helpers.hpp"

using namespace orf;
using namespace orf_test;

namespace {

// Independent simulation of (y, log t) pairs for one item, driven by the
// standard library engine rather than the library's own streams.
struct McSample {
    std::vector<double> counts;
    std::vector<double> logtimes;
};

McSample simulate_item(const ItemParams& item, const PopulationParams& pop, std::size_t n,
                       std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double l22 = std::sqrt(pop.residual_var());
    McSample sample;
    sample.counts.reserve(n);
    sample.logtimes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z1 = normal(engine);
        const double z2 = normal(engine);
        const double theta = z1;
        const double tau = pop.sigma_theta_tau * z1 + l22 * z2;
        const double p = oracle_Phi(item.a * (theta - item.b));
        std::binomial_distribution<int> binom(item.n_words, p);
        sample.counts.push_back(binom(engine));
        sample.logtimes.push_back(item.beta - tau + normal(engine) / item.alpha);
    }
    return sample;
}

}  // namespace

TEST(SuccessProb, HalfAtDifficultyAndMonotone) {
    ItemParams item{1.7, 0.4, 5.0, 0.0, 10};
    EXPECT_DOUBLE_EQ(success_prob(item.b, item), 0.5);
    ItemParams unit{1.0, 0.0, 5.0, 0.0, 10};
    EXPECT_NEAR(success_prob(1.0, unit), 0.8413447, 1e-7);
    double prev = success_prob(-6.0, item);
    for (double theta = -5.5; theta < 6.0; theta += 0.5) {
        const double cur = success_prob(theta, item);
        EXPECT_GT(cur, prev);
        prev = cur;
    }
    EXPECT_GT(success_prob(-100.0, item), 0.0);
    EXPECT_LT(success_prob(100.0, item), 1.0);
}

TEST(MeanCount, ZeroDifficultyGivesHalf) {
    for (double a : {0.2, 1.0, 3.5}) {
        ItemParams item{a, 0.0, 5.0, 0.0, 30};
        EXPECT_NEAR(mean_count(item), 15.0, 1e-12);
    }
}

TEST(MeanCount, MatchesSimulationOracle) {
    ItemParams item{1.0, 0.5, 5.0, 0.0, 10};
    PopulationParams pop{0.3, -0.2};
    const auto sample = simulate_item(item, pop, 400000, 17);
    const auto est = mc_mean(sample.counts);
    EXPECT_NEAR(mean_count(item), est.value, 3.0 * est.se);
}

TEST(VarCount, PureBinomialLimit) {
    ItemParams item{1e-6, 0.0, 5.0, 0.0, 10};
    EXPECT_NEAR(var_count(item), 2.5, 1e-4);
}

TEST(VarCount, MatchesSimulationOracle) {
    ItemParams item{1.0, 0.0, 5.0, 0.0, 10};
    PopulationParams pop{0.3, 0.0};
    const auto sample = simulate_item(item, pop, 400000, 29);
    const auto est = mc_variance(sample.counts);
    EXPECT_NEAR(var_count(item), est.value, 3.0 * est.se);
    EXPECT_GT(var_count(item), 0.0);
}

TEST(MeanLogtime, IsBetaAndShiftsWithUnits) {
    ItemParams item{1.0, 0.0, 5.0, 0.0, 10};
    EXPECT_DOUBLE_EQ(mean_logtime(item), 0.0);
    item.beta = -1.63;
    EXPECT_DOUBLE_EQ(mean_logtime(item), -1.63);
    ItemParams shifted = item;
    shifted.beta += std::log(60.0);
    EXPECT_DOUBLE_EQ(mean_logtime(shifted), mean_logtime(item) + std::log(60.0));
}

TEST(VarLogtime, SentinelAndArithmetic) {
    PopulationParams pop{0.24155 * 0.24155, -0.18116};
    ItemParams inf_item{1.0, 0.0, kAlphaInfinity, 0.0, 10};
    EXPECT_DOUBLE_EQ(var_logtime(inf_item, pop), pop.sigma2_tau);
    ItemParams item{1.0, 0.0, 5.0, 0.0, 10};
    EXPECT_NEAR(var_logtime(item, pop), 0.0983464, 1e-7);
    EXPECT_NEAR(var_logtime(item, pop), 0.24155 * 0.24155 + 0.04, 1e-10);
    EXPECT_GT(var_logtime(item, pop), 0.0);
}

TEST(CovLogtimePair, EqualsLatentSpeedVariance) {
    PopulationParams pop{0.24155 * 0.24155, -0.18116};
    EXPECT_NEAR(cov_logtime_pair(pop), 0.0583464025, 1e-9);
    PopulationParams small{1e-9, 0.0};
    EXPECT_NEAR(cov_logtime_pair(small), 0.0, 1e-8);
    // simulation agreement for a pair of items sharing the latent speed
    ItemParams item{1.0, 0.0, 5.0, 0.2, 10};
    std::mt19937_64 engine(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double l22 = std::sqrt(pop.residual_var());
    std::vector<double> t1, t2;
    for (int i = 0; i < 400000; ++i) {
        const double z1 = normal(engine);
        const double tau = pop.sigma_theta_tau * z1 + l22 * normal(engine);
        t1.push_back(item.beta - tau + normal(engine) / item.alpha);
        t2.push_back(item.beta - tau + normal(engine) / item.alpha);
    }
    const auto est = mc_covariance(t1, t2);
    EXPECT_NEAR(cov_logtime_pair(pop), est.value, 3.0 * est.se);
}

TEST(CovCountLogtime, ZeroCrossCovarianceAndClosedForm) {
    ItemParams item{1.0, 0.0, 5.0, 0.0, 10};
    EXPECT_DOUBLE_EQ(cov_count_logtime(item, PopulationParams{0.3, 0.0}), 0.0);
    PopulationParams pop{0.5, -0.5};
    EXPECT_NEAR(cov_count_logtime(item, pop), 0.5 * (10.0 / kSqrt2Pi) * std::sqrt(0.5), 1e-7);
    EXPECT_NEAR(cov_count_logtime(item, pop), 1.4104739, 1e-6);
    // sign is opposite to sigma_theta_tau
    EXPECT_GT(cov_count_logtime(item, pop), 0.0);
    EXPECT_LT(cov_count_logtime(item, PopulationParams{0.5, 0.3}), 0.0);
}

TEST(CovCountLogtime, MatchesSimulationOracle) {
    std::mt19937_64 param_engine(47);
    std::uniform_real_distribution<double> ua(0.3, 3.0), ub(-2.0, 2.0), ual(1.0, 20.0),
        ube(-2.0, 2.0), uv(0.05, 1.0), uc(-0.9, 0.9);
    for (int rep = 0; rep < 5; ++rep) {
        ItemParams item{ua(param_engine), ub(param_engine), ual(param_engine),
                        ube(param_engine), 25};
        PopulationParams pop;
        pop.sigma2_tau = uv(param_engine);
        pop.sigma_theta_tau = uc(param_engine) * std::sqrt(pop.sigma2_tau);
        const auto sample = simulate_item(item, pop, 400000, 1000 + rep);
        const auto est = mc_covariance(sample.counts, sample.logtimes);
        EXPECT_NEAR(cov_count_logtime(item, pop), est.value, 3.0 * est.se)
            << "a=" << item.a << " b=" << item.b;
    }
}

// The two normal-trait identities behind the count moments, checked by
// direct Monte Carlo against the closed forms.
TEST(MomentIdentities, ProbitExpectationsUnderNormalTrait) {
    std::mt19937_64 engine(53);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> ua(0.3, 3.0), ub(-2.0, 2.0);
    for (int rep = 0; rep < 5; ++rep) {
        const double a = ua(engine), b = ub(engine);
        const std::size_t n = 400000;
        std::vector<double> first(n), second(n), weighted(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = normal(engine);
            const double p = oracle_Phi(a * (z - b));
            first[i] = p;
            second[i] = p * p;
            weighted[i] = z * p;
        }
        const double q = -a * b / std::sqrt(1.0 + a * a);
        const auto m1 = mc_mean(first);
        EXPECT_NEAR(oracle_Phi(q), m1.value, 3.0 * m1.se) << "a=" << a << " b=" << b;
        const auto m2 = mc_mean(second);
        const double rho = a * a / (1.0 + a * a);
        EXPECT_NEAR(bvn_cdf(q, q, Correlation(rho)), m2.value, 3.0 * m2.se);
        const auto m3 = mc_mean(weighted);
        const double closed = kInvSqrt2Pi * std::sqrt(rho) *
                              std::exp(-0.5 * a * a * b * b / (1.0 + a * a));
        EXPECT_NEAR(closed, m3.value, 3.0 * m3.se);
    }
}

TEST(CompleteLoglik, ClosedFormSymmetricPoint) {
    // one individual, one item, theta = b, y = N/2, t = beta, tau = 0
    const int n_words = 10;
    ItemParams item{1.3, 0.7, 4.0, -1.2, n_words};
    PopulationParams pop{0.36, 0.0};
    Dataset data;
    data.items = {Item{"i1", n_words}};
    data.individuals = {Individual{"s1", {{0, Observation{n_words / 2, item.beta}}}}};
    const std::vector<LatentPair> latents = {LatentPair{item.b, 0.0}};
    const double expected = std::lgamma(n_words + 1.0) - 2.0 * std::lgamma(n_words / 2 + 1.0) +
                            n_words * std::log(0.5) + std::log(item.alpha) -
                            0.5 * std::log(2.0 * M_PI) - std::log(2.0 * M_PI) -
                            0.5 * std::log(pop.sigma2_tau) - 0.5 * item.b * item.b;
    EXPECT_NEAR(complete_loglik(data, latents, std::vector<ItemParams>{item}, pop), expected,
                1e-10);
}

TEST(CompleteLoglik, MatchesDirectProductOracle) {
    std::vector<ItemParams> items = {{1.2, -0.3, 6.0, 0.4, 6}, {0.7, 0.9, 3.0, -0.5, 4}};
    PopulationParams pop{0.4, -0.25};
    Dataset data;
    data.items = {Item{"i1", 6}, Item{"i2", 4}};
    data.individuals = {
        Individual{"s1", {{0, Observation{4, 0.55}}, {1, Observation{1, -0.35}}}},
        Individual{"s2", {{0, Observation{6, 0.30}}}},
    };
    const std::vector<LatentPair> latents = {LatentPair{0.8, -0.1}, LatentPair{-0.4, 0.3}};
    double expected = 0.0;
    for (std::size_t j = 0; j < data.individuals.size(); ++j) {
        expected += raw_joint_logdensity(latents[j].theta, latents[j].tau,
                                         data.individuals[j], items, pop);
    }
    EXPECT_NEAR(complete_loglik(data, latents, items, pop), expected, 1e-9);
}

TEST(CompleteLoglik, GaussianUnimodalInTau) {
    std::vector<ItemParams> items = {{1.0, 0.0, 4.0, 0.2, 8}};
    PopulationParams pop{0.5, 0.0};
    Dataset data;
    data.items = {Item{"i1", 8}};
    data.individuals = {Individual{"s1", {{0, Observation{5, 0.2}}}}};
    // observed t equals beta, so the time term peaks at tau = 0
    auto loglik_at = [&](double tau) {
        const std::vector<LatentPair> latents = {LatentPair{0.0, tau}};
        return complete_loglik(data, latents, items, pop);
    };
    const double at_peak = loglik_at(0.0);
    EXPECT_LT(loglik_at(0.5), at_peak);
    EXPECT_LT(loglik_at(1.0), loglik_at(0.5));
    EXPECT_LT(loglik_at(-0.5), at_peak);
    EXPECT_LT(loglik_at(-1.0), loglik_at(-0.5));
}

TEST(CompleteLoglik, InfiniteAlphaActsAsPointMass) {
    std::vector<ItemParams> items = {{1.0, 0.0, kAlphaInfinity, -0.5, 6}};
    PopulationParams pop{0.3, 0.0};
    Dataset data;
    data.items = {Item{"i1", 6}};
    data.individuals = {Individual{"s1", {{0, Observation{4, -0.75}}}}};
    // residual t - beta + tau = 0 exactly at tau = 0.25: the density spikes
    const std::vector<LatentPair> on_mass = {LatentPair{0.2, 0.25}};
    EXPECT_TRUE(std::isinf(complete_loglik(data, on_mass, items, pop)));
    EXPECT_GT(complete_loglik(data, on_mass, items, pop), 0.0);
    const std::vector<LatentPair> off_mass = {LatentPair{0.2, 0.125}};
    EXPECT_TRUE(std::isinf(complete_loglik(data, off_mass, items, pop)));
    EXPECT_LT(complete_loglik(data, off_mass, items, pop), 0.0);
}

TEST(CompleteLoglik, RejectsBadInputs) {
    std::vector<ItemParams> items = {{1.0, 0.0, 4.0, 0.0, 5}};
    Dataset data;
    data.items = {Item{"i1", 5}};
    data.individuals = {Individual{"s1", {{0, Observation{7, 0.0}}}}};  // y > N
    const std::vector<LatentPair> latents = {LatentPair{0.0, 0.0}};
    EXPECT_THROW(complete_loglik(data, latents, items, PopulationParams{0.5, 0.0}),
                 ValidationError);
    data.individuals[0].observed[0].count = 3;
    EXPECT_THROW(complete_loglik(data, latents, items, PopulationParams{0.5, 0.9}),
                 ValidationError);  // covariance not PD
    EXPECT_THROW(complete_loglik(data, {}, items, PopulationParams{0.5, 0.0}),
                 ValidationError);  // missing latent pair
}

TEST(ObservedLoglik, EmptyObservationSetsIntegrateToOne) {
    std::vector<ItemParams> items = {{1.0, 0.0, 4.0, 0.0, 5}};
    Dataset data;
    data.items = {Item{"i1", 5}};
    data.individuals = {Individual{"s1", {}}, Individual{"s2", {}}};
    EXPECT_DOUBLE_EQ(observed_loglik(data, items, PopulationParams{0.5, -0.3}, 30), 0.0);
}

TEST(ObservedLoglik, MatchesBruteForceIntegration) {
    std::vector<ItemParams> items = {{1.1, 0.4, 5.0, -0.8, 7}};
    PopulationParams pop{0.3, -0.35};
    Dataset data;
    data.items = {Item{"i1", 7}};
    data.individuals = {Individual{"s1", {{0, Observation{5, -0.63}}}}};

    auto integrand_outer = [&](double theta) {
        auto inner = [&](double tau) {
            return std::exp(
                raw_joint_logdensity(theta, tau, data.individuals[0], items, pop));
        };
        return adaptive_simpson(inner, -9.0, 9.0, 1e-14);
    };
    const double oracle = adaptive_simpson(integrand_outer, -9.0, 9.0, 1e-13);
    EXPECT_NEAR(observed_loglik(data, items, pop, 50), std::log(oracle), 1e-8);
}

TEST(ObservedLoglik, StableInQuadratureOrder) {
    std::vector<ItemParams> items = {{1.0, -0.5, 6.0, 0.1, 12}, {0.8, 0.3, 3.0, -0.4, 9}};
    PopulationParams pop{0.25, 0.2};
    Dataset data;
    data.items = {Item{"i1", 12}, Item{"i2", 9}};
    data.individuals = {
        Individual{"s1", {{0, Observation{9, 0.14}}, {1, Observation{6, -0.52}}}},
        Individual{"s2", {{0, Observation{12, 0.02}}}},
        Individual{"s3", {{1, Observation{2, -0.11}}}},
    };
    const double coarse = observed_loglik(data, items, pop, 30);
    const double fine = observed_loglik(data, items, pop, 50);
    EXPECT_NEAR(coarse, fine, 1e-6);
    EXPECT_THROW(observed_loglik(data, items, pop, 5), ValidationError);
}

TEST(ObservedLoglik, RejectsInfiniteAlpha) {
    std::vector<ItemParams> items = {{1.0, 0.0, kAlphaInfinity, 0.0, 5}};
    Dataset data;
    data.items = {Item{"i1", 5}};
    data.individuals = {Individual{"s1", {{0, Observation{3, 0.0}}}}};
    EXPECT_THROW(observed_loglik(data, items, PopulationParams{0.5, 0.0}, 30), NumericError);
}

// Shifting every log-time by log c moves beta targets by log c and leaves all
// other moment formulas unchanged.
TEST(Moments, TimeUnitEquivariance) {
    ItemParams item{1.4, -0.6, 7.0, 0.3, 20};
    PopulationParams pop{0.2, -0.15};
    const double shift = std::log(60.0);
    ItemParams shifted = item;
    shifted.beta += shift;
    EXPECT_DOUBLE_EQ(mean_count(shifted), mean_count(item));
    EXPECT_DOUBLE_EQ(var_count(shifted), var_count(item));
    EXPECT_DOUBLE_EQ(var_logtime(shifted, pop), var_logtime(item, pop));
    EXPECT_DOUBLE_EQ(cov_count_logtime(shifted, pop), cov_count_logtime(item, pop));
    EXPECT_DOUBLE_EQ(mean_logtime(shifted), mean_logtime(item) + shift);
}

// Counts and times are conditionally independent given the latent pair.
TEST(Model, ConditionalIndependenceInSimulation) {
    ItemParams item{1.0, -0.8, 6.0, 0.2, 15};
    PopulationParams pop{0.3, -0.3};
    std::mt19937_64 engine(61);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double l22 = std::sqrt(pop.residual_var());
    const std::size_t n = 200000;
    std::vector<double> count_resid(n), time_resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = normal(engine);
        const double tau = pop.sigma_theta_tau * theta + l22 * normal(engine);
        const double p = oracle_Phi(item.a * (theta - item.b));
        std::binomial_distribution<int> binom(item.n_words, p);
        count_resid[i] = binom(engine) - item.n_words * p;
        time_resid[i] = normal(engine) / item.alpha;
    }
    const double corr = pearson(count_resid, time_resid);
    EXPECT_NEAR(corr, 0.0, 3.0 / std::sqrt(static_cast<double>(n)));
}
