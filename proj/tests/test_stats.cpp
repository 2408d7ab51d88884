#include <cmath>

#include "doctest.h"
#include "traceprobe/stats.hpp"

using namespace traceprobe;

TEST_CASE("regularized gamma tail matches tabulated chi-square values to 1e-10") {
    struct Row {
        double x;
        int df;
        double p;
    };
    const Row table[] = {
        {5.0, 1, 0.025347318677468264},
        {3.841458820694124, 1, 0.05},
        {6.634896601021213, 1, 0.01},
        {10.827566170662733, 1, 0.001},
        {7.879438576622417, 1, 0.005},
        {2.705543454095404, 1, 0.10},
        {0.0157907740934312, 1, 0.90},
        {5.991464547107979, 2, 0.05},
        {0.04, 1, 0.8414805811217940},
        {1.96, 1, 0.1615133184675421},
        {3.24, 1, 0.0718606382258516},
    };
    for (const Row& row : table) {
        CHECK(chi_square_upper_tail(row.x, row.df) == doctest::Approx(row.p).epsilon(1e-10));
    }
    CHECK(chi_square_upper_tail(0.0, 1) == 1.0);
    CHECK_THROWS(chi_square_upper_tail(1.0, 0));
    CHECK_THROWS(regularized_gamma_q(0.5, -1.0));
}

TEST_CASE("mcnemar chi-square branch") {
    const TestResult balanced = mcnemar_from_counts(20, 20);
    CHECK(balanced.method == TestMethod::chi_square);
    CHECK(balanced.statistic == 0.0);
    CHECK(balanced.p_value == 1.0);
    CHECK(balanced.stars == Stars::ns);

    // 20 discordant pairs sit below the 25 cutoff, so mcnemar dispatches to
    // the exact binomial; the chi-squared statistic is still reported.
    const TestResult skewed = mcnemar_from_counts(15, 5);
    CHECK(skewed.method == TestMethod::exact_binomial);
    CHECK(skewed.statistic == 5.0);  // (15-5)^2 / 20, exactly
    CHECK(skewed.p_value == doctest::Approx(0.0413894653).epsilon(1e-8));

    // The chi-squared route for the same counts, against an independent tail
    // oracle: p = erfc(sqrt(chi2 / 2)) for one degree of freedom.
    const double oracle = std::erfc(std::sqrt(5.0 / 2.0));
    CHECK(chi_square_upper_tail(skewed.statistic, 1) ==
          doctest::Approx(oracle).epsilon(1e-6));
    CHECK(chi_square_upper_tail(5.0, 1) == doctest::Approx(0.02535).epsilon(1e-3));

    const TestResult wide = mcnemar_from_counts(30, 10);
    CHECK(wide.method == TestMethod::chi_square);
    CHECK(wide.statistic == 10.0);
    CHECK(wide.p_value == doctest::Approx(chi_square_upper_tail(10.0, 1)).epsilon(1e-12));
    CHECK(wide.stars == Stars::two);
}

TEST_CASE("mcnemar exact binomial branch") {
    const TestResult small = mcnemar_from_counts(3, 1);
    CHECK(small.method == TestMethod::exact_binomial);
    // enumerate Binomial(4, 1/2): 2 * P(X <= 1) = 2 * 5/16
    CHECK(small.p_value == doctest::Approx(0.625).epsilon(1e-12));

    const TestResult zero = mcnemar_from_counts(0, 0);
    CHECK(zero.p_value == 1.0);
    CHECK(zero.statistic == 0.0);

    SUBCASE("two-sided p caps at 1 for balanced counts") {
        const TestResult even = mcnemar_from_counts(6, 6);
        CHECK(even.p_value == 1.0);
    }
    SUBCASE("branch switch happens exactly at 25 discordant pairs") {
        CHECK(mcnemar_from_counts(24, 0).method == TestMethod::exact_binomial);
        CHECK(mcnemar_from_counts(12, 12).method == TestMethod::exact_binomial);
        CHECK(mcnemar_from_counts(25, 0).method == TestMethod::chi_square);
        CHECK(mcnemar_from_counts(13, 12).method == TestMethod::chi_square);
    }
}

TEST_CASE("mcnemar from raw pairs") {
    std::vector<std::pair<bool, bool>> pairs;
    for (int i = 0; i < 15; ++i) pairs.emplace_back(false, true);   // n01
    for (int i = 0; i < 5; ++i) pairs.emplace_back(true, false);    // n10
    for (int i = 0; i < 30; ++i) pairs.emplace_back(true, true);    // concordant
    const TestResult result = mcnemar(pairs);
    CHECK(result.n01 == 15);
    CHECK(result.n10 == 5);
    CHECK(result.statistic == 5.0);

    CHECK_THROWS(mcnemar({}));
}

TEST_CASE("label swap symmetry and monotonicity") {
    SUBCASE("swapping conditions leaves the two-sided p unchanged") {
        for (int n01 = 0; n01 <= 30; n01 += 3) {
            for (int n10 = 0; n10 <= 30; n10 += 4) {
                const TestResult ab = mcnemar_from_counts(n01, n10);
                const TestResult ba = mcnemar_from_counts(n10, n01);
                CHECK(ab.p_value == ba.p_value);
                CHECK(ab.n01 == ba.n10);
                CHECK(ab.n10 == ba.n01);
            }
        }
    }
    SUBCASE("p is nonincreasing in |n01 - n10| for fixed discordant total") {
        for (int total : {26, 31, 40, 51}) {
            double previous = 2.0;
            for (int k = total / 2; k >= 0; --k) {  // |diff| grows as k shrinks
                const TestResult r = mcnemar_from_counts(total - k, k);
                REQUIRE(r.method == TestMethod::chi_square);
                CHECK(r.p_value <= previous);
                previous = r.p_value;
            }
        }
    }
    SUBCASE("branch continuity where significance is decided") {
        // The chi-square and exact branches track each other within 0.02
        // absolute p in the region where stars are assigned (exact p below
        // 0.06); near-balanced splits diverge and are excluded.
        for (int total = 25; total <= 40; ++total) {
            for (int k = 0; k <= total / 2; ++k) {
                const double exact =
                    exact_binomial_two_sided(k, total);
                if (exact >= 0.06) continue;
                const TestResult chi = mcnemar_from_counts(total - k, k);
                CHECK(std::abs(chi.p_value - exact) < 0.02);
            }
        }
    }
}

TEST_CASE("significance stars use strict thresholds") {
    CHECK(significance_stars(0.0009) == Stars::three);
    CHECK(significance_stars(0.001) == Stars::two);
    CHECK(significance_stars(0.009) == Stars::two);
    CHECK(significance_stars(0.01) == Stars::one);
    CHECK(significance_stars(0.02535) == Stars::one);
    CHECK(significance_stars(0.05) == Stars::ns);  // strict
    CHECK(significance_stars(0.4) == Stars::ns);
    CHECK_THROWS(significance_stars(1.5));
    CHECK(to_string(Stars::three) == "***");
}

TEST_CASE("paired condition test") {
    auto keyed = [](const std::vector<bool>& outcomes, const std::string& prefix) {
        std::vector<std::pair<std::string, bool>> records;
        for (size_t i = 0; i < outcomes.size(); ++i) {
            records.emplace_back(prefix + std::to_string(i), outcomes[i]);
        }
        return records;
    };

    SUBCASE("identical record sets give p = 1") {
        const auto a = keyed({true, false, true, true}, "k");
        const TestResult r = paired_condition_test(a, a);
        CHECK(r.p_value == 1.0);
        CHECK(r.n01 == 0);
        CHECK(r.n10 == 0);
    }
    SUBCASE("delegates to mcnemar on the matched pairs") {
        std::vector<std::pair<std::string, bool>> a, b;
        for (int i = 0; i < 20; ++i) {
            a.emplace_back("k" + std::to_string(i), i < 5);    // A right on 5
            b.emplace_back("k" + std::to_string(i), i >= 5);   // B right on 15
        }
        const TestResult r = paired_condition_test(a, b);
        CHECK(r.n01 == 15);
        CHECK(r.n10 == 5);
        CHECK(r.statistic == 5.0);
    }
    SUBCASE("unmatched keys are reported, zero matches is an error") {
        const auto a = keyed({true}, "a");
        const auto b = keyed({true}, "b");
        std::vector<std::string> unmatched;
        CHECK_THROWS(paired_condition_test(a, b, Alternative::two_sided, &unmatched));
        CHECK(unmatched.size() == 2);
    }
    SUBCASE("one-sided halves the p when the direction matches") {
        std::vector<std::pair<std::string, bool>> a, b;
        for (int i = 0; i < 40; ++i) {
            a.emplace_back("k" + std::to_string(i), i < 8);
            b.emplace_back("k" + std::to_string(i), i < 30);  // b better
        }
        const TestResult two = paired_condition_test(a, b);
        const TestResult one = paired_condition_test(a, b, Alternative::b_greater);
        CHECK(one.p_value == doctest::Approx(two.p_value / 2.0));
        const TestResult wrong_way = paired_condition_test(a, b, Alternative::b_less);
        CHECK(wrong_way.p_value == doctest::Approx(1.0 - two.p_value / 2.0));
    }
}
