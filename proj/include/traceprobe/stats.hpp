#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace traceprobe {

enum class TestMethod { chi_square, exact_binomial };
enum class Stars { ns, one, two, three };
enum class Alternative { two_sided, b_greater, b_less };

std::string to_string(TestMethod method);
std::string to_string(Stars stars);
std::string to_string(Alternative alternative);

struct TestResult {
    TestMethod method = TestMethod::exact_binomial;
    double statistic = 0.0;  // (n01-n10)^2 / (n01+n10) when discordants exist
    double p_value = 1.0;
    int64_t n01 = 0;  // A wrong, B right
    int64_t n10 = 0;  // A right, B wrong
    Stars stars = Stars::ns;
    Alternative alternative = Alternative::two_sided;
};

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a).
double regularized_gamma_q(double a, double x);

/// P(X > x) for a chi-squared variable with `df` degrees of freedom.
double chi_square_upper_tail(double x, int df = 1);

/// Two-sided sign-test p for k = min(n01, n10) discordant successes out of
/// n = n01 + n10 fair-coin trials: min(1, 2 * P(X <= k)).
double exact_binomial_two_sided(int64_t k, int64_t n);

/// Strict thresholds: ***<0.001, **<0.01, *<0.05, otherwise ns.
Stars significance_stars(double p);

/// McNemar's paired test on (correct_A, correct_B) outcomes. Discordant
/// counts of 25 or more use the chi-squared statistic (no continuity
/// correction); fewer fall back to the exact binomial. Zero discordants
/// give p = 1 with statistic 0. Empty input is an error.
TestResult mcnemar(const std::vector<std::pair<bool, bool>>& pairs);
TestResult mcnemar_from_counts(int64_t n01, int64_t n10);

/// Joins two record sets on a shared key, maps them to correctness pairs and
/// delegates to mcnemar. One-sided alternatives halve the two-sided p when
/// the observed direction matches, and report 1 - p/2 otherwise. Keys
/// present on one side only are appended to `unmatched` when given; zero
/// matched keys is an error.
TestResult paired_condition_test(const std::vector<std::pair<std::string, bool>>& records_a,
                                 const std::vector<std::pair<std::string, bool>>& records_b,
                                 Alternative alternative = Alternative::two_sided,
                                 std::vector<std::string>* unmatched = nullptr);

}  // namespace traceprobe
