// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ctxprobe::stats {

double mean(std::span<const double> values);

// Standardizes with the sample (n-1) standard deviation.
// Throws StatsError for fewer than two values or a constant input.
std::vector<double> zscore(std::span<const double> values);

// Named predictor columns; the intercept is implicit and always first in a fit.
class DesignMatrix {
public:
    DesignMatrix(std::vector<std::string> names, Eigen::MatrixXd predictors,
                 std::vector<int> outcome);

    // Columns given as separate vectors (all the same length as outcome).
    static DesignMatrix from_columns(std::vector<std::string> names,
                                     const std::vector<std::vector<double>> &columns,
                                     std::vector<int> outcome);

    std::size_t rows() const { return outcome_.size(); }
    const std::vector<std::string> &names() const { return names_; }
    const Eigen::MatrixXd &predictors() const { return x_; }
    const std::vector<int> &outcome() const { return outcome_; }

    // [1 | predictors]
    Eigen::MatrixXd with_intercept() const;

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd x_;
    std::vector<int> outcome_;
};

struct Coefficient {
    std::string name;
    double estimate = 0.0; // log-odds
    double standard_error = 0.0;
    double z_statistic = 0.0;
    double p_value = 1.0; // two-sided normal tail
    double ci95_low = 0.0;
    double ci95_high = 0.0;
};

struct RegressionFit {
    std::vector<Coefficient> coefficients; // intercept first
    bool converged = false;
    bool separation = false;
    int iterations = 0;
    double log_likelihood = 0.0;
    std::size_t observations = 0;

    const Coefficient &operator[](const std::string &name) const;
};

struct LogisticOptions {
    double tolerance = 1e-8; // on max |coefficient change|
    int max_iterations = 100;
};

// Maximum likelihood by iteratively reweighted least squares with Wald
// inference from the inverse Fisher information at the optimum.
// Throws StatsError when the outcome lacks a class or the information matrix
// is singular at the start (collinear design). Separation is reported through
// `separation` / `converged`, not thrown.
RegressionFit fit_logistic(const DesignMatrix &design, const LogisticOptions &options = {});

// Bernoulli log-likelihood and its gradient for coefficients (intercept first).
double logistic_log_likelihood(const DesignMatrix &design, const Eigen::VectorXd &beta);
Eigen::VectorXd logistic_score(const DesignMatrix &design, const Eigen::VectorXd &beta);

double normal_cdf(double z);
double two_sided_normal_p(double z);

// P(score+ > score-) + 0.5 P(score+ = score-). Throws StatsError if a class is empty.
double roc_auc(std::span<const double> positives, std::span<const double> negatives);
// labels: nonzero = positive.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

enum class PValueMethod { automatic, exact, normal };

struct MannWhitneyResult {
    double u = 0.0; // U of sample_a
    double p = 1.0; // one-sided, alternative: sample_a tends to be greater
    bool exact = false;
};

// Midranks for ties. automatic = exact enumeration when n_a + n_b <= 12,
// otherwise normal approximation with tie-corrected variance and continuity
// correction. Exact is available up to n_a + n_b <= 60.
MannWhitneyResult mann_whitney_u(std::span<const double> sample_a,
                                 std::span<const double> sample_b,
                                 PValueMethod method = PValueMethod::automatic);

struct PermutationResult {
    double observed_diff = 0.0; // mean(a) - mean(b)
    double p = 1.0;             // (1 + exceedances) / (permutations + 1)
    std::size_t exceedances = 0;
    std::size_t permutations = 0;
};

// Two-sided permutation test on the difference in means. Iteration i uses its
// own generator derived from (seed, i), so the result is independent of the
// thread count. Swapping the groups leaves p unchanged.
PermutationResult permutation_mean_diff(std::span<const double> group_a,
                                        std::span<const double> group_b,
                                        std::size_t n_permutations = 1000,
                                        std::uint64_t seed = 42);

double binomial_sem(double p_hat, std::size_t n);

} // namespace ctxprobe::stats
