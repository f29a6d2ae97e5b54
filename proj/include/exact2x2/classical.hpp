#pragma once

// Comparator tests: Fisher exact and mid-p, Z statistics, signed root
// likelihood ratio, plus the machinery that turns any of them into an
// unconditional exact test by maximizing the null tail probability, with the
// confidence-interval (Berger-Boos) and estimated-rate variants.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "exact2x2/boundary.hpp"
#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"
#include "exact2x2/util.hpp"

namespace exact2x2 {

enum class StatKind { fisher_p, fisher_midp, z_pooled, z_unpooled, srlr };

struct TestStatistic {
    StatKind kind = StatKind::fisher_p;
    double delta = 0.0;  // z_unpooled noninferiority shift
    double value = 0.0;
    bool smaller_is_extreme = true;  // direction: does small value mean strong evidence
};

namespace detail {

inline double log_choose(int n, int k) {
    return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
           std::lgamma(double(n - k) + 1.0);
}

// signum(num) * infinity with the 0 * infinity = 0 convention.
inline double ratio_convention(double num, double var) {
    if (var > 0.0) return num / std::sqrt(var);
    if (num > 0.0) return std::numeric_limits<double>::infinity();
    if (num < 0.0) return -std::numeric_limits<double>::infinity();
    return 0.0;
}

inline double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

// Binomial log-likelihood of both arms with the 0*log(0) = 0 convention.
inline double two_arm_loglik(const Design& d, const Outcome& s, double pC, double pD) {
    return xlogy(double(s.s_C), pC) + xlogy(double(d.n_C - s.s_C), 1.0 - pC) +
           xlogy(double(s.s_D), pD) + xlogy(double(d.n_D - s.s_D), 1.0 - pD);
}

inline void check_outcome(const Design& d, const Outcome& s) {
    if (s.s_C < 0 || s.s_C > d.n_C || s.s_D < 0 || s.s_D > d.n_D)
        throw std::out_of_range("classical test: outcome out of range");
}

}  // namespace detail

// Conditional probability of S_D >= s_D given the observed total, summed in
// ascending s'_D order.
inline double fisher_p(const Design& d, const Outcome& s) {
    detail::check_outcome(d, s);
    if (s.s_D == 0) return 1.0;  // the tail covers the whole conditional support
    const int total = s.s_C + s.s_D;
    const int hi = std::min(d.n_D, total);
    const double log_den = detail::log_choose(d.n(), total);
    double tail = 0.0;
    for (int v = s.s_D; v <= hi; ++v) {
        if (total - v > d.n_C) continue;
        tail += std::exp(detail::log_choose(d.n_D, v) + detail::log_choose(d.n_C, total - v) - log_den);
    }
    return std::min(tail, 1.0);
}

inline double fisher_midp(const Design& d, const Outcome& s) {
    detail::check_outcome(d, s);
    const int total = s.s_C + s.s_D;
    const double point = std::exp(detail::log_choose(d.n_D, s.s_D) +
                                  detail::log_choose(d.n_C, s.s_C) - detail::log_choose(d.n(), total));
    return fisher_p(d, s) - 0.5 * point;
}

inline TestStatistic statistic(StatKind kind, const Design& d, const Outcome& s, double delta = 0.0) {
    detail::check_outcome(d, s);
    if (delta < 0.0) throw std::domain_error("statistic: delta must be nonnegative");
    TestStatistic out;
    out.kind = kind;
    out.delta = kind == StatKind::z_unpooled ? delta : 0.0;
    const double tC = double(s.s_C) / d.n_C;
    const double tD = double(s.s_D) / d.n_D;
    switch (kind) {
        case StatKind::fisher_p:
            out.value = fisher_p(d, s);
            out.smaller_is_extreme = true;
            break;
        case StatKind::fisher_midp:
            out.value = fisher_midp(d, s);
            out.smaller_is_extreme = true;
            break;
        case StatKind::z_pooled: {
            const double pooled = double(s.s_C + s.s_D) / d.n();
            const double var = pooled * (1.0 - pooled) * (1.0 / d.n_C + 1.0 / d.n_D);
            out.value = detail::ratio_convention(tC - tD, var);
            out.smaller_is_extreme = true;
            break;
        }
        case StatKind::z_unpooled: {
            const double var = tC * (1.0 - tC) / d.n_C + tD * (1.0 - tD) / d.n_D;
            out.value = detail::ratio_convention(tC + delta - tD, var);
            out.smaller_is_extreme = true;
            break;
        }
        case StatKind::srlr: {
            const double pooled = double(s.s_C + s.s_D) / d.n();
            const double dev = 2.0 * (detail::two_arm_loglik(d, s, tC, tD) -
                                      detail::two_arm_loglik(d, s, pooled, pooled));
            const double sign = tD > tC ? 1.0 : (tD < tC ? -1.0 : 0.0);
            out.value = sign * std::sqrt(std::max(dev, 0.0));
            out.smaller_is_extreme = false;
            break;
        }
    }
    return out;
}

// Outcomes at least as extreme as the observed one, ties included.
inline DecisionVector level_set(StatKind kind, const SampleSpace& space, const Outcome& observed,
                                double delta = 0.0) {
    const TestStatistic ref = statistic(kind, space.design(), observed, delta);
    DecisionVector d(space.size());
    for (int p = 0; p < space.size(); ++p) {
        const TestStatistic ts = statistic(kind, space.design(), space.outcome_at(p), delta);
        d.set(p, ref.smaller_is_extreme ? ts.value <= ref.value : ts.value >= ref.value);
    }
    return d;
}

struct UncondResult {
    enum class Method { grid_refine, berger_boos };

    double p_value = 0.0;
    double maximizing_theta = 0.0;
    Method method = Method::grid_refine;
    double gamma = 0.0;  // berger_boos only
};

namespace detail {

// sup over [lo, hi] of the exact tail theta -> P_{(theta, g0(theta))}(cells):
// 1e-3 grid scan plus golden-section refinement around every local maximum.
inline UncondResult maximize_tail(const SampleSpace& space, const DecisionVector& cells,
                                  const BoundaryFn& boundary, double lo, double hi) {
    if (!(lo <= hi)) throw std::domain_error("unconditional test: empty theta range");
    if (lo < 0.0 || hi > boundary.domain_hi() + 1e-12)
        throw std::domain_error("unconditional test: theta range outside the null domain");
    hi = std::min(hi, boundary.domain_hi());
    const auto tail = [&](double theta) {
        return rejection_rate(space, cells, Theta{theta, boundary.g0(theta)});
    };

    UncondResult out;
    if (hi - lo < 1e-15) {
        out.p_value = tail(lo);
        out.maximizing_theta = lo;
        return out;
    }
    const double step = 1e-3;
    const int K = std::max(2, static_cast<int>(std::ceil((hi - lo) / step)) + 1);
    std::vector<double> xs(K), fs(K);
    for (int i = 0; i < K; ++i) {
        xs[i] = std::min(lo + i * ((hi - lo) / (K - 1)), hi);
        fs[i] = tail(xs[i]);
    }
    int best = 0;
    for (int i = 1; i < K; ++i)
        if (fs[i] > fs[best]) best = i;
    out.p_value = fs[best];
    out.maximizing_theta = xs[best];
    for (int i = 0; i < K; ++i) {
        const bool left_ok = i == 0 || fs[i] >= fs[i - 1];
        const bool right_ok = i == K - 1 || fs[i] >= fs[i + 1];
        if (!(left_ok && right_ok)) continue;
        const double a = xs[std::max(i - 1, 0)];
        const double b = xs[std::min(i + 1, K - 1)];
        const double xstar = golden_section_max(tail, a, b, 1e-10);
        const double fstar = tail(xstar);
        if (fstar > out.p_value) {
            out.p_value = fstar;
            out.maximizing_theta = xstar;
        }
    }
    return out;
}

}  // namespace detail

inline UncondResult uncond_exact_p(StatKind kind, const Design& d, const Outcome& observed,
                                   std::optional<std::pair<double, double>> theta_range = std::nullopt,
                                   const BoundaryFn& boundary = BoundaryFn::identity(),
                                   double delta = 0.0) {
    SampleSpace space(d);
    const DecisionVector cells = level_set(kind, space, observed, delta);
    const double lo = theta_range ? theta_range->first : 0.0;
    const double hi = theta_range ? theta_range->second : boundary.domain_hi();
    return detail::maximize_tail(space, cells, boundary, lo, hi);
}

// Maximize only over the exact confidence interval for the pooled success
// rate, then pay for the restriction with the +gamma addend.
inline UncondResult berger_boos_p(StatKind kind, const Design& d, const Outcome& observed,
                                  double gamma = 0.0005,
                                  const BoundaryFn& boundary = BoundaryFn::identity(),
                                  double delta = 0.0) {
    if (!(gamma > 0.0) || !(gamma < 0.5)) throw std::domain_error("berger_boos_p: gamma out of (0, 0.5)");
    detail::check_outcome(d, observed);
    const auto [lo, hi] = clopper_pearson(observed.s_C + observed.s_D, d.n(), 1.0 - gamma);
    SampleSpace space(d);
    const DecisionVector cells = level_set(kind, space, observed, delta);
    const double cap = boundary.domain_hi();
    UncondResult out = detail::maximize_tail(space, cells, boundary, std::min(lo, cap), std::min(hi, cap));
    out.p_value = std::min(out.p_value + gamma, 1.0);
    out.method = UncondResult::Method::berger_boos;
    out.gamma = gamma;
    return out;
}

// Exact tail at the pooled point estimate; defined for the statistics whose
// critical value the estimated-rate construction targets.
inline double estimated_p(StatKind kind, const Design& d, const Outcome& observed) {
    if (kind != StatKind::z_pooled && kind != StatKind::srlr)
        throw std::invalid_argument("estimated_p: defined for z_pooled and srlr only");
    detail::check_outcome(d, observed);
    SampleSpace space(d);
    const DecisionVector cells = level_set(kind, space, observed);
    const double pooled = double(observed.s_C + observed.s_D) / d.n();
    return rejection_rate(space, cells, Theta{pooled, pooled});
}

struct RegionReport {
    DecisionVector region;
    bool convex = false;
};

inline RegionReport region_from_test(const SampleSpace& space,
                                     const std::function<double(const Outcome&)>& pfun, double alpha) {
    RegionReport out{DecisionVector(space.size()), false};
    for (int p = 0; p < space.size(); ++p) out.region.set(p, pfun(space.outcome_at(p)) <= alpha);
    out.convex = is_convex(space, out.region);
    return out;
}

inline RegionReport region_from_test(StatKind kind, const SampleSpace& space, double alpha) {
    const Design d = space.design();
    switch (kind) {
        case StatKind::fisher_p:
            return region_from_test(space, [&d](const Outcome& s) { return fisher_p(d, s); }, alpha);
        case StatKind::fisher_midp:
            return region_from_test(space, [&d](const Outcome& s) { return fisher_midp(d, s); }, alpha);
        default:
            throw std::invalid_argument(
                "region_from_test: statistic kinds other than the Fisher family need an explicit "
                "p-value function (unconditional, confidence-interval, or estimated)");
    }
}

}  // namespace exact2x2
