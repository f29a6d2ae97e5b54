#pragma once

// Scalar probability kernels: binomial and joint pmfs, the beta-function
// family, hypergeometric log-pmf, and Clopper-Pearson intervals.
// Everything is evaluated in log space so group sizes up to 10^4 stay finite.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace exact2x2 {

struct Design {
    int n_C = 0;  // control group size
    int n_D = 0;  // developmental group size
    int n() const { return n_C + n_D; }
};

struct Outcome {
    int s_C = 0;
    int s_D = 0;
};

struct Theta {
    double theta_C = 0.0;
    double theta_D = 0.0;
};

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// ln C(n, k); -inf for out-of-range k so vanishing terms drop out of sums.
inline double log_binom(int n, int k) {
    if (k < 0 || k > n) return neg_inf;
    if (k == 0 || k == n) return 0.0;
    return static_cast<double>(std::lgamma(static_cast<long double>(n) + 1.0L) -
                               std::lgamma(static_cast<long double>(k) + 1.0L) -
                               std::lgamma(static_cast<long double>(n - k) + 1.0L));
}

// e * ln(base) with the 0^0 = 1 convention (exponent 0 always gives 0).
inline double log_pow(double base, int e) {
    if (e == 0) return 0.0;
    if (base <= 0.0) return base == 0.0 ? neg_inf : std::numeric_limits<double>::quiet_NaN();
    return e * std::log(base);
}

inline double log_binom_pmf(int n, int s, double theta) {
    if (s < 0 || s > n) throw std::domain_error("binom_pmf: s out of range");
    if (theta < 0.0 || theta > 1.0) throw std::domain_error("binom_pmf: theta out of [0,1]");
    return log_binom(n, s) + log_pow(theta, s) + log_pow(1.0 - theta, n - s);
}

inline double binom_pmf(int n, int s, double theta) {
    return std::exp(log_binom_pmf(n, s, theta));
}

inline double log_joint_pmf(const Design& d, const Outcome& s, const Theta& t) {
    return log_binom_pmf(d.n_C, s.s_C, t.theta_C) + log_binom_pmf(d.n_D, s.s_D, t.theta_D);
}

inline double joint_pmf(const Design& d, const Outcome& s, const Theta& t) {
    return std::exp(log_joint_pmf(d, s, t));
}

inline double log_beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("log_beta: arguments must be positive");
    return static_cast<double>(std::lgamma(static_cast<long double>(a)) +
                               std::lgamma(static_cast<long double>(b)) -
                               std::lgamma(static_cast<long double>(a) + static_cast<long double>(b)));
}

namespace detail {

// Continued fraction for I_x(a,b), modified Lentz.
// https://en.wikipedia.org/wiki/Beta_function#Incomplete_beta_function
inline double inc_beta_cf(double x, double a, double b) {
    const double tiny = 1e-300;
    const double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m <= 400; ++m) {
        // even step
        double num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        result *= d * c;
        // odd step
        num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::fabs(delta - 1.0) < eps) break;
    }
    return result;
}

}  // namespace detail

// Regularized incomplete beta function I_x(a,b), absolute error <= 1e-12.
inline double reg_inc_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: a,b must be positive");
    if (x < 0.0 || x > 1.0) throw std::domain_error("reg_inc_beta: x out of [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log1p(-x) - std::log(a) - log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * detail::inc_beta_cf(x, a, b);
    }
    const double log_front_c =
        b * std::log1p(-x) + a * std::log(x) - std::log(b) - log_beta(b, a);
    return 1.0 - std::exp(log_front_c) * detail::inc_beta_cf(1.0 - x, b, a);
}

// Quantile of Beta(a,b) by monotone bisection on reg_inc_beta.
inline double beta_quantile(double p, double a, double b) {
    if (p < 0.0 || p > 1.0) throw std::domain_error("beta_quantile: p out of [0,1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (reg_inc_beta(mid, a, b) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Equal-tailed exact interval; lo = 0 at zero successes, hi = 1 at all successes.
inline std::pair<double, double> clopper_pearson(int successes, int trials, double level) {
    if (successes < 0 || successes > trials) throw std::domain_error("clopper_pearson: count out of range");
    if (!(level > 0.0) || !(level < 1.0)) throw std::domain_error("clopper_pearson: level out of (0,1)");
    const double tail = 0.5 * (1.0 - level);
    const double lo = successes == 0 ? 0.0 : beta_quantile(tail, successes, trials - successes + 1.0);
    const double hi = successes == trials ? 1.0 : beta_quantile(1.0 - tail, successes + 1.0, trials - successes);
    return {lo, hi};
}

// ln P(X = k) for X hypergeometric: k marked among n draws from a population
// of size N with K marked in total.
inline double log_hypergeom_pmf(int N, int K, int n, int k) {
    if (k < 0 || k > n || k > K || n - k > N - K) return neg_inf;
    return log_binom(K, k) + log_binom(N - K, n - k) - log_binom(N, n);
}

}  // namespace exact2x2
