#include "traceprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace traceprobe {

std::string to_string(TestMethod method) {
    return method == TestMethod::chi_square ? "chi_square" : "exact_binomial";
}

std::string to_string(Stars stars) {
    switch (stars) {
        case Stars::ns: return "ns";
        case Stars::one: return "*";
        case Stars::two: return "**";
        case Stars::three: return "***";
    }
    return "ns";
}

std::string to_string(Alternative alternative) {
    switch (alternative) {
        case Alternative::two_sided: return "two_sided";
        case Alternative::b_greater: return "b_greater";
        case Alternative::b_less: return "b_less";
    }
    return "two_sided";
}

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIterations = 1000;

// Lower regularized incomplete gamma by series expansion; converges fast
// for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kMaxIterations; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw std::runtime_error("incomplete gamma series did not converge");
}

// Upper regularized incomplete gamma by Lentz continued fraction; used
// for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIterations; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw std::runtime_error("incomplete gamma continued fraction did not converge");
}

}  // namespace

double regularized_gamma_q(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("gamma_q requires a > 0");
    if (x < 0.0) throw std::invalid_argument("gamma_q requires x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_continued_fraction(a, x);
}

double chi_square_upper_tail(double x, int df) {
    if (df <= 0) throw std::invalid_argument("chi-square df must be positive");
    if (x <= 0.0) return 1.0;
    return regularized_gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

double exact_binomial_two_sided(int64_t k, int64_t n) {
    if (n < 0 || k < 0 || k > n) throw std::invalid_argument("bad binomial arguments");
    if (n == 0) return 1.0;
    // n is small here (the chi-square branch takes over at 25), so the
    // binomial coefficients are exact in double precision.
    double coeff = 1.0;
    double tail = 0.0;
    for (int64_t i = 0; i <= k; ++i) {
        if (i > 0) coeff = coeff * static_cast<double>(n - i + 1) / static_cast<double>(i);
        tail += coeff;
    }
    const double p = 2.0 * tail / std::ldexp(1.0, static_cast<int>(n));
    return std::min(1.0, p);
}

Stars significance_stars(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("p outside [0,1]");
    if (p < 0.001) return Stars::three;
    if (p < 0.01) return Stars::two;
    if (p < 0.05) return Stars::one;
    return Stars::ns;
}

TestResult mcnemar_from_counts(int64_t n01, int64_t n10) {
    if (n01 < 0 || n10 < 0) throw std::invalid_argument("negative discordant counts");
    TestResult result;
    result.n01 = n01;
    result.n10 = n10;
    const int64_t discordant = n01 + n10;
    if (discordant == 0) {
        result.method = TestMethod::exact_binomial;
        result.statistic = 0.0;
        result.p_value = 1.0;
    } else {
        const double diff = static_cast<double>(n01 - n10);
        result.statistic = diff * diff / static_cast<double>(discordant);
        if (discordant >= 25) {
            result.method = TestMethod::chi_square;
            result.p_value = chi_square_upper_tail(result.statistic, 1);
        } else {
            result.method = TestMethod::exact_binomial;
            result.p_value = exact_binomial_two_sided(std::min(n01, n10), discordant);
        }
    }
    result.stars = significance_stars(result.p_value);
    return result;
}

TestResult mcnemar(const std::vector<std::pair<bool, bool>>& pairs) {
    if (pairs.empty()) throw std::runtime_error("mcnemar: no paired observations");
    int64_t n01 = 0;
    int64_t n10 = 0;
    for (const auto& [a, b] : pairs) {
        if (!a && b) ++n01;
        if (a && !b) ++n10;
    }
    return mcnemar_from_counts(n01, n10);
}

TestResult paired_condition_test(const std::vector<std::pair<std::string, bool>>& records_a,
                                 const std::vector<std::pair<std::string, bool>>& records_b,
                                 Alternative alternative,
                                 std::vector<std::string>* unmatched) {
    std::map<std::string, bool> by_key_b;
    for (const auto& [key, correct] : records_b) by_key_b.emplace(key, correct);

    std::vector<std::pair<bool, bool>> pairs;
    std::map<std::string, bool> matched_b;
    for (const auto& [key, correct_a] : records_a) {
        const auto it = by_key_b.find(key);
        if (it == by_key_b.end()) {
            if (unmatched) unmatched->push_back("A-only: " + key);
            continue;
        }
        matched_b.emplace(key, true);
        pairs.emplace_back(correct_a, it->second);
    }
    if (unmatched) {
        for (const auto& [key, correct] : by_key_b) {
            (void)correct;
            if (!matched_b.count(key)) unmatched->push_back("B-only: " + key);
        }
    }
    if (pairs.empty()) throw std::runtime_error("paired test: zero matched keys");

    TestResult result = mcnemar(pairs);
    result.alternative = alternative;
    if (alternative != Alternative::two_sided) {
        const bool matches_direction = alternative == Alternative::b_greater
                                           ? result.n01 > result.n10
                                           : result.n10 > result.n01;
        const double half = result.p_value / 2.0;
        result.p_value = matches_direction ? half : 1.0 - half;
        result.stars = significance_stars(result.p_value);
    }
    return result;
}

}  // namespace traceprobe
