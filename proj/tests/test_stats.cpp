// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "ctxprobe/error.hpp"
#include "ctxprobe/rng.hpp"
#include "ctxprobe/stats.hpp"
#include "oracles.hpp"

using namespace ctxprobe;
using namespace ctxprobe::stats;
using namespace ctxprobe::oracle;

namespace {

const std::vector<std::vector<double>> kDesigns = {
    {0.2, 1.0},
    {-0.5, 0.8, -0.6},
    {0.3, 1.0, 0.8, 0.6},
};

} // namespace

TEST(ZScore, MeanZeroUnitSampleSd) {
    const std::vector<double> v = {1, 2, 3, 4, 10};
    const auto z = zscore(v);
    EXPECT_NEAR(mean(z), 0.0, 1e-12);
    double ss = 0.0;
    for (double x : z) ss += x * x;
    EXPECT_NEAR(ss / 4.0, 1.0, 1e-12);
    EXPECT_THROW(zscore(std::vector<double>{2, 2, 2}), StatsError);
    EXPECT_THROW(zscore(std::vector<double>{2}), StatsError);
}

TEST(Logistic, MatchesGridSearchOracle) {
    for (std::size_t d = 0; d < kDesigns.size(); ++d) {
        const auto design = planted_design(kDesigns[d], 200, 100 + d);
        const auto fit = fit_logistic(design);
        ASSERT_TRUE(fit.converged);
        std::vector<double> est;
        for (const auto &c : fit.coefficients) est.push_back(c.estimate);
        const auto grid = grid_search_mle(design);
        const double ll_fit = oracle_loglik(design, est);
        const double ll_grid = oracle_loglik(design, grid);
        EXPECT_NEAR(ll_fit, ll_grid, 1e-4) << "design " << d;
        EXPECT_GE(ll_fit, ll_grid - 1e-9) << "design " << d;
        EXPECT_NEAR(fit.log_likelihood, ll_fit, 1e-9);
    }
}

TEST(Logistic, ScoreMatchesFiniteDifference) {
    for (std::size_t d = 0; d < kDesigns.size(); ++d) {
        const auto design = planted_design(kDesigns[d], 200, 200 + d);
        Eigen::VectorXd beta(kDesigns[d].size());
        for (std::size_t j = 0; j < kDesigns[d].size(); ++j) beta[j] = 0.5 * kDesigns[d][j] + 0.1;
        const Eigen::VectorXd g = logistic_score(design, beta);
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            Eigen::VectorXd up = beta, down = beta;
            up[j] += h;
            down[j] -= h;
            const double fd =
                (logistic_log_likelihood(design, up) - logistic_log_likelihood(design, down)) / (2 * h);
            EXPECT_LT(std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j])), 1e-4)
                << "design " << d << " coefficient " << j;
        }
    }
}

TEST(Logistic, PlantedCoefficientsCoveredByConfidenceIntervals) {
    for (std::size_t d = 0; d < kDesigns.size(); ++d) {
        std::vector<int> covered(kDesigns[d].size(), 0);
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto fit = fit_logistic(planted_design(kDesigns[d], 200, seed * 7919 + d));
            for (std::size_t j = 0; j < covered.size(); ++j) {
                const auto &c = fit.coefficients[j];
                covered[j] += c.ci95_low <= kDesigns[d][j] && kDesigns[d][j] <= c.ci95_high;
            }
        }
        for (std::size_t j = 0; j < covered.size(); ++j) {
            EXPECT_GE(covered[j], 18) << "design " << d << " coefficient " << j;
        }
    }
}

TEST(Logistic, WaldQuantitiesAreConsistent) {
    const auto fit = fit_logistic(planted_design(kDesigns[2], 300, 5));
    for (const auto &c : fit.coefficients) {
        EXPECT_NEAR(c.z_statistic, c.estimate / c.standard_error, 1e-12);
        EXPECT_NEAR(c.p_value, 2.0 * (1.0 - normal_cdf(std::abs(c.z_statistic))), 1e-12);
        EXPECT_NEAR(c.ci95_high - c.estimate, 1.96 * c.standard_error, 1e-12);
        EXPECT_NEAR(c.estimate - c.ci95_low, 1.96 * c.standard_error, 1e-12);
    }
    EXPECT_EQ(fit["x0"].name, "x0");
}

TEST(Logistic, RescalingAPredictorRescalesItsCoefficient) {
    const auto d = planted_design(kDesigns[2], 200, 9);
    Eigen::MatrixXd x = d.predictors();
    x.col(1) *= 3.0;
    const DesignMatrix scaled(d.names(), x, d.outcome());
    const auto a = fit_logistic(d);
    const auto b = fit_logistic(scaled);
    EXPECT_NEAR(b.coefficients[2].estimate * 3.0, a.coefficients[2].estimate, 1e-7);
    EXPECT_NEAR(b.coefficients[2].z_statistic, a.coefficients[2].z_statistic, 1e-6);
    EXPECT_NEAR(a.log_likelihood, b.log_likelihood, 1e-9);
}

TEST(Logistic, DegenerateInputs) {
    Eigen::MatrixXd x(6, 1);
    x << 1, 2, 3, 4, 5, 6;
    EXPECT_THROW(fit_logistic(DesignMatrix({"x"}, x, {1, 1, 1, 1, 1, 1})), StatsError);
    // Perfect separation is flagged, not thrown.
    const auto sep = fit_logistic(DesignMatrix({"x"}, x, {0, 0, 0, 1, 1, 1}));
    EXPECT_TRUE(sep.separation || !sep.converged);
    Eigen::MatrixXd collinear(6, 2);
    collinear << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
    EXPECT_THROW(fit_logistic(DesignMatrix({"a", "b"}, collinear, {0, 1, 0, 1, 1, 0})), StatsError);
}

TEST(Auc, MatchesPairwiseCountingForAllSmallInputs) {
    std::mt19937 gen(17);
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t np = 1 + gen() % 11;
        const std::size_t nn = 1 + gen() % (12 - np);
        const int levels = 1 + gen() % 6; // small value sets force ties
        std::vector<double> pos(np), neg(nn);
        for (auto &v : pos) v = gen() % levels;
        for (auto &v : neg) v = gen() % levels;
        long twice = 0;
        for (double p : pos) {
            for (double q : neg) twice += p > q ? 2 : p == q ? 1 : 0;
        }
        EXPECT_EQ(roc_auc(pos, neg), double(twice) / double(2 * np * nn));
    }
}

TEST(Auc, AllTiesGiveExactlyHalf) {
    const std::vector<double> a = {3, 3, 3}, b = {3, 3};
    EXPECT_EQ(roc_auc(a, b), 0.5);
    EXPECT_THROW(roc_auc(a, std::vector<double>{}), StatsError);
    const std::vector<double> scores = {0.1, 0.9, 0.4};
    const std::vector<int> labels = {0, 1, 0};
    EXPECT_EQ(roc_auc(scores, labels), 1.0);
}

TEST(MannWhitney, MatchesExhaustiveEnumeration) {
    std::mt19937 gen(23);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t na = 1 + gen() % 11;
        const std::size_t nb = 1 + gen() % (12 - na);
        const int levels = 2 + gen() % 8;
        std::vector<double> pooled(na + nb);
        for (auto &v : pooled) v = gen() % levels;
        const std::vector<double> a(pooled.begin(), pooled.begin() + na);
        const std::vector<double> b(pooled.begin() + na, pooled.end());

        // U of a counted pairwise (ties 1/2) for every split of the pooled values.
        auto u_of = [&](std::uint32_t mask) {
            double u = 0.0;
            for (std::size_t i = 0; i < pooled.size(); ++i) {
                if (!(mask >> i & 1u)) continue;
                for (std::size_t j = 0; j < pooled.size(); ++j) {
                    if (mask >> j & 1u) continue;
                    u += pooled[i] > pooled[j] ? 1.0 : pooled[i] == pooled[j] ? 0.5 : 0.0;
                }
            }
            return u;
        };
        const double u_obs = u_of((1u << na) - 1);
        std::size_t total = 0, tail = 0;
        for (std::uint32_t mask = 0; mask < (1u << pooled.size()); ++mask) {
            if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
            ++total;
            tail += u_of(mask) >= u_obs;
        }
        const auto r = mann_whitney_u(a, b);
        EXPECT_TRUE(r.exact);
        EXPECT_EQ(r.u, u_obs);
        EXPECT_EQ(r.p, double(tail) / double(total)) << "trial " << trial;
    }
}

TEST(MannWhitney, NormalApproximationIsCloseToExact) {
    CounterRng rng(3);
    std::vector<double> a(25), b(25);
    for (auto &v : a) v = rng.normal() + 0.5;
    for (auto &v : b) v = rng.normal();
    const auto exact = mann_whitney_u(a, b, PValueMethod::exact);
    const auto approx = mann_whitney_u(a, b, PValueMethod::normal);
    EXPECT_EQ(exact.u, approx.u);
    EXPECT_NEAR(exact.p, approx.p, 0.01);
}

TEST(Permutation, IdenticalGroupsGivePOne) {
    const std::vector<double> a = {1.5, 2.0, 3.25, 4.0}, b = {4.0, 1.5, 3.25, 2.0};
    const auto r = permutation_mean_diff(a, b, 1000, 42);
    EXPECT_EQ(r.p, 1.0);
    EXPECT_EQ(r.observed_diff, 0.0);
}

TEST(Permutation, PlantedShiftIsDetected) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CounterRng rng(seed * 1000003);
        std::vector<double> a(100), b(100);
        for (auto &v : a) v = rng.normal() + 2.0;
        for (auto &v : b) v = rng.normal();
        EXPECT_LT(permutation_mean_diff(a, b, 1000, seed).p, 0.01) << "seed " << seed;
    }
}

TEST(Permutation, ThreeVersusThreeMatchesEnumeration) {
    const std::vector<std::vector<double>> cases = {
        {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {0.3, 2.2, 1.7, 0.1, 0.9, 1.1}, {5, 5, 6, 1, 2, 2}};
    for (const auto &pooled : cases) {
        const std::vector<double> a(pooled.begin(), pooled.begin() + 3);
        const std::vector<double> b(pooled.begin() + 3, pooled.end());
        auto diff = [&](std::uint32_t mask) {
            double sa = 0, sb = 0;
            for (std::size_t i = 0; i < 6; ++i) (mask >> i & 1u ? sa : sb) += pooled[i];
            return std::abs(sa / 3 - sb / 3);
        };
        const double obs = diff(0b000111);
        int total = 0, hit = 0;
        for (std::uint32_t mask = 0; mask < 64; ++mask) {
            if (__builtin_popcount(mask) != 3) continue;
            ++total;
            hit += diff(mask) >= obs - 1e-12;
        }
        const double exact = double(hit) / total;
        EXPECT_NEAR(permutation_mean_diff(a, b, 1000, 11).p, exact, 0.05);
    }
}

TEST(Permutation, SwapSymmetricAndDeterministic) {
    CounterRng rng(8);
    std::vector<double> a(30), b(40);
    for (auto &v : a) v = rng.normal() + 0.3;
    for (auto &v : b) v = rng.normal();
    const auto ab = permutation_mean_diff(a, b, 500, 5);
    const auto ba = permutation_mean_diff(b, a, 500, 5);
    EXPECT_EQ(ab.p, ba.p);
    EXPECT_EQ(ab.observed_diff, -ba.observed_diff);
    EXPECT_EQ(permutation_mean_diff(a, b, 500, 5).exceedances, ab.exceedances);
}

TEST(Sem, ClosedForm) {
    EXPECT_DOUBLE_EQ(binomial_sem(0.5, 100), 0.05);
    EXPECT_EQ(binomial_sem(1.0, 10), 0.0);
}

TEST(NormalCdf, KnownValues) {
    EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
    EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
    EXPECT_NEAR(two_sided_normal_p(1.959963984540054), 0.05, 1e-12);
}
