// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/kernels.hpp"

namespace ctxprobe::stats {

double mean(std::span<const double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const double v : values) s += v;
    return s / static_cast<double>(values.size());
}

std::vector<double> zscore(std::span<const double> values) {
    if (values.size() < 2) throw StatsError("zscore needs at least two values");
    const double m = mean(values);
    double ss = 0.0;
    for (const double v : values) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    if (!(sd > 0.0)) throw StatsError("zscore of a constant column is undefined");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - m) / sd;
    return out;
}

// --- design ----------------------------------------------------------------

DesignMatrix::DesignMatrix(std::vector<std::string> names, Eigen::MatrixXd predictors,
                           std::vector<int> outcome)
    : names_(std::move(names)), x_(std::move(predictors)), outcome_(std::move(outcome)) {
    if (static_cast<std::size_t>(x_.rows()) != outcome_.size()) {
        throw StatsError("design has " + std::to_string(x_.rows()) + " rows but " +
                         std::to_string(outcome_.size()) + " outcomes");
    }
    if (static_cast<std::size_t>(x_.cols()) != names_.size()) {
        throw StatsError("design column count does not match predictor names");
    }
    for (int &y : outcome_) y = y != 0 ? 1 : 0;
}

DesignMatrix DesignMatrix::from_columns(std::vector<std::string> names,
                                        const std::vector<std::vector<double>> &columns,
                                        std::vector<int> outcome) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(outcome.size()),
                      static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != outcome.size()) {
            throw StatsError("column '" + (c < names.size() ? names[c] : std::string("?")) +
                             "' length does not match outcome");
        }
        for (std::size_t r = 0; r < outcome.size(); ++r) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
        }
    }
    return DesignMatrix(std::move(names), std::move(x), std::move(outcome));
}

Eigen::MatrixXd DesignMatrix::with_intercept() const {
    Eigen::MatrixXd x(x_.rows(), x_.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(x_.cols()) = x_;
    return x;
}

const Coefficient &RegressionFit::operator[](const std::string &name) const {
    for (const auto &c : coefficients) {
        if (c.name == name) return c;
    }
    throw StatsError("no coefficient named '" + name + "'");
}

// --- logistic regression ----------------------------------------------------

namespace {

double softplus(double eta) { return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))); }

double sigmoid(double eta) {
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

Eigen::VectorXd outcome_vector(const DesignMatrix &d) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(d.rows()));
    for (std::size_t i = 0; i < d.rows(); ++i) y(static_cast<Eigen::Index>(i)) = d.outcome()[i];
    return y;
}

double log_likelihood(const Eigen::MatrixXd &x, const Eigen::VectorXd &y,
                      const Eigen::VectorXd &beta) {
    const Eigen::VectorXd eta = x * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
    return ll;
}

} // namespace

double logistic_log_likelihood(const DesignMatrix &design, const Eigen::VectorXd &beta) {
    return log_likelihood(design.with_intercept(), outcome_vector(design), beta);
}

Eigen::VectorXd logistic_score(const DesignMatrix &design, const Eigen::VectorXd &beta) {
    const Eigen::MatrixXd x = design.with_intercept();
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd resid = outcome_vector(design);
    for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) -= sigmoid(eta(i));
    return x.transpose() * resid;
}

RegressionFit fit_logistic(const DesignMatrix &design, const LogisticOptions &options) {
    const Eigen::MatrixXd x = design.with_intercept();
    const Eigen::VectorXd y = outcome_vector(design);
    const auto n = x.rows();
    const auto k = x.cols();
    const double positives = y.sum();
    if (positives == 0.0 || positives == static_cast<double>(n)) {
        throw StatsError("logistic fit needs both outcome classes");
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd prob(n), weight(n);
    auto refresh = [&](const Eigen::VectorXd &b) {
        const Eigen::VectorXd eta = x * b;
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = sigmoid(eta(i));
            weight(i) = prob(i) * (1.0 - prob(i));
        }
    };

    RegressionFit fit;
    fit.observations = static_cast<std::size_t>(n);
    double ll = log_likelihood(x, y, beta);
    bool singular = false;
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        fit.iterations = iter;
        refresh(beta);
        const Eigen::MatrixXd info = x.transpose() * weight.asDiagonal() * x;
        const Eigen::VectorXd score = x.transpose() * (y - prob);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        const double pivot_floor = 1e-12 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= pivot_floor) {
            if (iter == 1) throw StatsError("singular information matrix (collinear design)");
            singular = true;
            break;
        }
        Eigen::VectorXd step = ldlt.solve(score);
        // Step halving keeps the likelihood monotone.
        Eigen::VectorXd candidate = beta + step;
        double candidate_ll = log_likelihood(x, y, candidate);
        for (int h = 0; h < 30 && candidate_ll < ll - 1e-12; ++h) {
            step *= 0.5;
            candidate = beta + step;
            candidate_ll = log_likelihood(x, y, candidate);
        }
        beta = candidate;
        ll = candidate_ll;
        if (step.cwiseAbs().maxCoeff() < options.tolerance) {
            fit.converged = true;
            break;
        }
    }

    refresh(beta);
    const Eigen::VectorXd eta = x * beta;
    const bool saturated = eta.cwiseAbs().maxCoeff() > 25.0;
    fit.separation = singular || saturated || !fit.converged;
    fit.log_likelihood = ll;

    Eigen::VectorXd se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    if (!singular) {
        const Eigen::MatrixXd info = x.transpose() * weight.asDiagonal() * x;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
            se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
        }
    }

    for (Eigen::Index j = 0; j < k; ++j) {
        Coefficient c;
        c.name = j == 0 ? "intercept" : design.names()[static_cast<std::size_t>(j - 1)];
        c.estimate = beta(j);
        c.standard_error = se(j);
        c.z_statistic = c.estimate / c.standard_error;
        c.p_value = two_sided_normal_p(c.z_statistic);
        c.ci95_low = c.estimate - 1.96 * c.standard_error;
        c.ci95_high = c.estimate + 1.96 * c.standard_error;
        fit.coefficients.push_back(c);
    }
    return fit;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double two_sided_normal_p(double z) {
    if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

// --- rank statistics --------------------------------------------------------

namespace {

// Twice the midrank of every pooled value (integers, so ties stay exact).
std::vector<std::int64_t> doubled_midranks(std::span<const double> pooled) {
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<std::int64_t> ranks(pooled.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        // 1-based ranks i+1..j+1; doubled midrank = (i+1) + (j+1)
        const auto r2 = static_cast<std::int64_t>(i + j + 2);
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r2;
        i = j + 1;
    }
    return ranks;
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    return pooled;
}

void require_finite(std::span<const double> v, const char *what) {
    for (const double x : v) {
        if (std::isnan(x)) throw StatsError(std::string(what) + " contains NaN");
    }
}

} // namespace

double roc_auc(std::span<const double> positives, std::span<const double> negatives) {
    if (positives.empty() || negatives.empty()) {
        throw StatsError("ROC-AUC needs both positive and negative examples");
    }
    require_finite(positives, "ROC-AUC scores");
    require_finite(negatives, "ROC-AUC scores");
    const auto ranks = doubled_midranks(concat(positives, negatives));
    std::int64_t r2 = 0;
    for (std::size_t i = 0; i < positives.size(); ++i) r2 += ranks[i];
    const auto np = static_cast<std::int64_t>(positives.size());
    const auto nn = static_cast<std::int64_t>(negatives.size());
    // 2U = 2R - np(np+1)
    const std::int64_t u2 = r2 - np * (np + 1);
    return static_cast<double>(u2) / static_cast<double>(2 * np * nn);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw StatsError("ROC-AUC: scores/labels length mismatch");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
    return roc_auc(pos, neg);
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 PValueMethod method) {
    if (a.empty() || b.empty()) throw StatsError("Mann-Whitney U needs two non-empty samples");
    require_finite(a, "Mann-Whitney sample");
    require_finite(b, "Mann-Whitney sample");
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;
    const auto ranks = doubled_midranks(concat(a, b));
    std::int64_t r2 = 0;
    for (std::size_t i = 0; i < na; ++i) r2 += ranks[i];
    const auto na64 = static_cast<std::int64_t>(na);

    MannWhitneyResult res;
    res.u = static_cast<double>(r2 - na64 * (na64 + 1)) / 2.0;

    const bool exact = method == PValueMethod::exact ||
                       (method == PValueMethod::automatic && n <= 12);
    if (exact) {
        if (n > 60) throw StatsError("exact Mann-Whitney limited to 60 observations");
        // ways[k][s]: subsets of size k with doubled rank sum s.
        const auto max_sum = static_cast<std::size_t>(n * (n + 1));
        std::vector<std::vector<std::uint64_t>> ways(na + 1,
                                                     std::vector<std::uint64_t>(max_sum + 1, 0));
        ways[0][0] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = static_cast<std::size_t>(ranks[i]);
            for (std::size_t k = std::min(na, i + 1); k >= 1; --k) {
                for (std::size_t s = max_sum; s >= r; --s) ways[k][s] += ways[k - 1][s - r];
            }
        }
        std::uint64_t total = 0, tail = 0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            total += ways[na][s];
            if (static_cast<std::int64_t>(s) >= r2) tail += ways[na][s];
        }
        res.p = static_cast<double>(tail) / static_cast<double>(total);
        res.exact = true;
        return res;
    }

    // Tie correction: sum over tie groups of t^3 - t.
    std::vector<double> sorted = concat(a, b);
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i);
        ties += t * t * t - t;
        i = j;
    }
    const double dn = static_cast<double>(n);
    const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
    const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                       ((dn + 1.0) - ties / (dn * (dn - 1.0)));
    if (!(var > 0.0)) {
        res.p = 1.0;
        return res;
    }
    const double z = (res.u - mu - 0.5) / std::sqrt(var);
    res.p = 1.0 - normal_cdf(z);
    return res;
}

PermutationResult permutation_mean_diff(std::span<const double> a, std::span<const double> b,
                                        std::size_t n_permutations, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw StatsError("permutation test needs two non-empty groups");
    PermutationResult res;
    res.observed_diff = mean(a) - mean(b);
    res.permutations = n_permutations;

    // Canonical pool (sorted) and split at the smaller group size make the
    // null draws identical when the groups are swapped.
    std::vector<double> pooled = concat(a, b);
    std::sort(pooled.begin(), pooled.end());
    double scale = 1.0;
    for (const double v : pooled) scale = std::max(scale, std::abs(v));
    const double threshold = std::abs(res.observed_diff) - 1e-12 * scale;
    res.exceedances = kernels::omp::permutation_exceedances(pooled, std::min(a.size(), b.size()),
                                                            threshold, n_permutations, seed);
    res.p = static_cast<double>(1 + res.exceedances) / static_cast<double>(n_permutations + 1);
    return res;
}

double binomial_sem(double p_hat, std::size_t n) {
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(std::max(0.0, p_hat * (1.0 - p_hat)) / static_cast<double>(n));
}

} // namespace ctxprobe::stats
