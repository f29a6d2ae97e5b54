#pragma once

// Null-boundary discretization and the Lipschitz constraint rows.
//
// The null boundary is theta_D = g0(theta_C) with g0 increasing. On each grid
// interval the rejection rate of a convex region is bounded by its value at
// the left endpoint plus a slack term assembled from interval extrema of two
// derivative kernels. Both pieces are emitted as linear constraint rows.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"
#include "exact2x2/util.hpp"

namespace exact2x2 {

struct BoundaryFn {
    enum class Kind { identity, margin, custom };

    Kind kind = Kind::identity;
    double delta = 0.0;                       // margin shift, in (0,1)
    std::function<double(double)> custom_g;   // custom: g0
    std::function<double(double)> custom_gp;  // custom: g0'
    double custom_domain_hi = 1.0;            // custom: theta_C where g0 = 1

    static BoundaryFn identity() { return BoundaryFn{}; }

    static BoundaryFn margin(double delta) {
        if (!(delta > 0.0) || !(delta < 1.0)) throw std::domain_error("margin boundary: delta out of (0,1)");
        BoundaryFn b;
        b.kind = Kind::margin;
        b.delta = delta;
        return b;
    }

    static BoundaryFn custom(std::function<double(double)> g, std::function<double(double)> gp,
                             double domain_hi) {
        BoundaryFn b;
        b.kind = Kind::custom;
        b.custom_g = std::move(g);
        b.custom_gp = std::move(gp);
        b.custom_domain_hi = domain_hi;
        return b;
    }

    // Largest admissible theta_C, i.e. g0^-1(1).
    double domain_hi() const {
        switch (kind) {
            case Kind::identity: return 1.0;
            case Kind::margin: return 1.0 - delta;
            case Kind::custom: return custom_domain_hi;
        }
        return 1.0;
    }

    double g0(double theta) const {
        if (theta < -1e-12 || theta > domain_hi() + 1e-12)
            throw std::domain_error("boundary: theta outside domain");
        switch (kind) {
            case Kind::identity: return theta;
            case Kind::margin: return std::min(1.0, theta + delta);
            case Kind::custom: return custom_g(theta);
        }
        return theta;
    }

    double g0_prime(double theta) const {
        switch (kind) {
            case Kind::identity:
            case Kind::margin: return 1.0;
            case Kind::custom: return custom_gp(theta);
        }
        return 1.0;
    }

    // True when kernel extremization has no closed form and uses the sampling
    // heuristic instead (custom boundaries only); such bounds carry no global
    // optimality guarantee.
    bool heuristic_extrema() const { return kind == Kind::custom; }
};

struct NullGrid {
    std::vector<double> thetas;  // strictly increasing, first = 0, last = g0^-1(1)

    int K() const { return static_cast<int>(thetas.size()); }

    static NullGrid with_step(const BoundaryFn& boundary, double step = 1e-3) {
        if (!(step > 0.0)) throw std::domain_error("grid step must be positive");
        const double hi = boundary.domain_hi();
        NullGrid g;
        for (int j = 0;; ++j) {
            const double t = j * step;
            if (t >= hi - 0.5 * step) break;
            g.thetas.push_back(t);
        }
        g.thetas.push_back(hi);
        g.validate(boundary);
        return g;
    }

    static NullGrid from_points(const BoundaryFn& boundary, std::vector<double> pts) {
        NullGrid g;
        g.thetas = std::move(pts);
        g.validate(boundary);
        return g;
    }

    void validate(const BoundaryFn& boundary) const {
        if (thetas.size() < 2) throw std::domain_error("null grid needs K >= 2");
        if (thetas.front() != 0.0) throw std::domain_error("null grid must start at 0");
        if (std::fabs(thetas.back() - boundary.domain_hi()) > 1e-12)
            throw std::domain_error("null grid must end at the boundary domain end");
        for (std::size_t j = 1; j < thetas.size(); ++j)
            if (!(thetas[j] > thetas[j - 1])) throw std::domain_error("null grid not strictly increasing");
    }
};

// Real parts of the roots of a*x^3 + b*x^2 + c*x + d = 0 via Cardano's
// formula; degenerate leading coefficients fall back to quadratic/linear.
inline std::vector<double> cubic_real_roots(double a, double b, double c, double d) {
    const double scale = std::max({std::fabs(a), std::fabs(b), std::fabs(c), std::fabs(d), 1.0});
    if (std::fabs(a) < 1e-14 * scale) {
        if (std::fabs(b) < 1e-14 * scale) {
            if (std::fabs(c) < 1e-14 * scale) return {};
            return {-d / c};
        }
        const std::complex<double> disc = std::sqrt(std::complex<double>(c * c - 4.0 * b * d, 0.0));
        return {((-c + disc) / (2.0 * b)).real(), ((-c - disc) / (2.0 * b)).real()};
    }
    const double D0 = b * b - 3.0 * a * c;
    const double D1 = 2.0 * b * b * b - 9.0 * a * b * c + 27.0 * a * a * d;
    const std::complex<double> inner = std::sqrt(std::complex<double>(D1 * D1 - 4.0 * D0 * D0 * D0, 0.0));
    // Take the larger-magnitude branch so C stays away from 0.
    std::complex<double> radicand = (std::complex<double>(D1, 0.0) + inner) / 2.0;
    const std::complex<double> alt = (std::complex<double>(D1, 0.0) - inner) / 2.0;
    if (std::abs(alt) > std::abs(radicand)) radicand = alt;
    if (std::abs(radicand) == 0.0) {
        const double triple = -b / (3.0 * a);
        return {triple, triple, triple};
    }
    const std::complex<double> C = std::pow(radicand, 1.0 / 3.0);
    const std::complex<double> xi(-0.5, 0.5 * std::sqrt(3.0));
    std::vector<double> roots;
    std::complex<double> Ck = C;
    for (int k = 0; k < 3; ++k) {
        const std::complex<double> r =
            -(std::complex<double>(b, 0.0) + Ck + std::complex<double>(D0, 0.0) / Ck) / (3.0 * a);
        roots.push_back(r.real());
        Ck *= xi;
    }
    return roots;
}

namespace detail {

// log of g0'(t)^[with_gprime] * t^e1 * g0(t)^e2 * (1-t)^e3 * (1-g0(t))^e4.
inline double log_slack_kernel(const BoundaryFn& boundary, double theta, int e1, int e2, int e3,
                               int e4, bool with_gprime) {
    const double g = boundary.g0(theta);
    double v = log_pow(theta, e1) + log_pow(g, e2) + log_pow(1.0 - theta, e3) + log_pow(1.0 - g, e4);
    if (with_gprime) {
        const double gp = boundary.g0_prime(theta);
        if (!(gp > 0.0)) throw std::domain_error("boundary derivative must be positive");
        v += std::log(gp);
    }
    return v;
}

// Cubic coefficients of the derivative bracket of
// t^e1 (t+delta)^e2 (1-t)^e3 (1-t-delta)^e4, obtained by multiplying the
// logarithmic derivative through by t(t+delta)(1-t)(1-t-delta).
struct Cubic {
    double a, b, c, d;
};

inline Cubic margin_bracket_cubic(int e1, int e2, int e3, int e4, double delta) {
    Cubic q;
    q.a = double(e1) + e2 + e3 + e4;
    q.b = -2.0 * e1 * (1.0 - delta) + e2 * (delta - 2.0) - e3 * (1.0 - 2.0 * delta) -
          e4 * (1.0 - delta);
    q.c = e1 * (1.0 - 3.0 * delta + delta * delta) + e2 * (1.0 - delta) -
          e3 * (delta - delta * delta) - e4 * delta;
    q.d = e1 * delta * (1.0 - delta);
    return q;
}

// Heuristic extremizer for custom boundaries: dense sampling and
// golden-section refinement around the best cells. Not guaranteed global.
inline double sampled_log_max(const std::function<double(double)>& f, double lo, double hi,
                              int samples = 2001) {
    if (hi <= lo) return f(lo);
    std::vector<double> xs(samples), fs(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = lo + (hi - lo) * i / (samples - 1);
        fs[i] = f(xs[i]);
    }
    std::vector<int> order(samples);
    for (int i = 0; i < samples; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return fs[x] > fs[y]; });
    double best = fs[order[0]];
    for (int k = 0; k < 3 && k < samples; ++k) {
        const int i = order[k];
        const double a = xs[std::max(0, i - 1)];
        const double b = xs[std::min(samples - 1, i + 1)];
        const double x = golden_section_max(f, a, b, 1e-12);
        best = std::max(best, f(x));
    }
    return best;
}

inline void clamp_candidates(std::vector<double>& cand, double lo, double hi) {
    for (double& x : cand) x = std::min(hi, std::max(lo, x));
    cand.push_back(lo);
    cand.push_back(hi);
}

}  // namespace detail

// log of the interval maximum of the D-side slack kernel
//   g0'(t) * t^{s_C} * g0(t)^{s_D-1} * (1-t)^{n_C-s_C} * (1-g0(t))^{n_D-s_D}.
// Structural zero (returns -inf) at s_D = 0: the matching slack coefficient
// carries binom(n_D-1, -1) = 0 and the kernel is never consumed.
inline double log_boundary_kernel_max(const Design& dz, const Outcome& s, const BoundaryFn& boundary,
                                      double lo, double hi) {
    if (s.s_D == 0) return neg_inf;
    if (!(lo <= hi)) throw std::domain_error("kernel interval: lo > hi");
    const int e1 = s.s_C, e2 = s.s_D - 1, e3 = dz.n_C - s.s_C, e4 = dz.n_D - s.s_D;
    switch (boundary.kind) {
        case BoundaryFn::Kind::identity: {
            const int sum = s.s_C + s.s_D, n = dz.n();
            auto f = [&](double t) { return log_pow(t, sum - 1) + log_pow(1.0 - t, n - sum); };
            double crit = n - 1 > 0 ? double(sum - 1) / (n - 1) : lo;
            crit = std::min(hi, std::max(lo, crit));
            return std::max({f(lo), f(hi), f(crit)});
        }
        case BoundaryFn::Kind::margin: {
            const detail::Cubic q = detail::margin_bracket_cubic(e1, e2, e3, e4, boundary.delta);
            std::vector<double> cand = cubic_real_roots(q.a, q.b, q.c, q.d);
            detail::clamp_candidates(cand, lo, hi);
            double best = neg_inf;
            for (double x : cand)
                best = std::max(best, detail::log_slack_kernel(boundary, x, e1, e2, e3, e4, false));
            return best;
        }
        case BoundaryFn::Kind::custom:
            return detail::sampled_log_max(
                [&](double t) { return detail::log_slack_kernel(boundary, t, e1, e2, e3, e4, true); },
                lo, hi);
    }
    return neg_inf;
}

// log of the interval minimum of the C-side slack kernel
//   t^{s_C} * g0(t)^{s_D} * (1-t)^{n_C-s_C-1} * (1-g0(t))^{n_D-s_D}.
// Structural zero at s_C = n_C (binom(n_C-1, n_C) = 0).
inline double log_boundary_kernel_min(const Design& dz, const Outcome& s, const BoundaryFn& boundary,
                                      double lo, double hi) {
    if (s.s_C == dz.n_C) return neg_inf;
    if (!(lo <= hi)) throw std::domain_error("kernel interval: lo > hi");
    const int e1 = s.s_C, e2 = s.s_D, e3 = dz.n_C - s.s_C - 1, e4 = dz.n_D - s.s_D;
    switch (boundary.kind) {
        case BoundaryFn::Kind::identity: {
            // Kernel t^sum (1-t)^{n-sum-1} is unimodal, so the minimum sits
            // at an interval endpoint.
            const int sum = s.s_C + s.s_D, n = dz.n();
            auto f = [&](double t) { return log_pow(t, sum) + log_pow(1.0 - t, n - sum - 1); };
            return std::min(f(lo), f(hi));
        }
        case BoundaryFn::Kind::margin: {
            const detail::Cubic q = detail::margin_bracket_cubic(e1, e2, e3, e4, boundary.delta);
            std::vector<double> cand = cubic_real_roots(q.a, q.b, q.c, q.d);
            detail::clamp_candidates(cand, lo, hi);
            double best = std::numeric_limits<double>::infinity();
            for (double x : cand)
                best = std::min(best, detail::log_slack_kernel(boundary, x, e1, e2, e3, e4, false));
            return best;
        }
        case BoundaryFn::Kind::custom:
            return -detail::sampled_log_max(
                [&](double t) { return -detail::log_slack_kernel(boundary, t, e1, e2, e3, e4, false); },
                lo, hi);
    }
    return neg_inf;
}

inline double boundary_kernel_max(const Design& dz, const Outcome& s, const BoundaryFn& boundary,
                                  double lo, double hi) {
    const double v = log_boundary_kernel_max(dz, s, boundary, lo, hi);
    return v == neg_inf ? 0.0 : std::exp(v);
}

inline double boundary_kernel_min(const Design& dz, const Outcome& s, const BoundaryFn& boundary,
                                  double lo, double hi) {
    const double v = log_boundary_kernel_min(dz, s, boundary, lo, hi);
    return v == neg_inf ? 0.0 : std::exp(v);
}

// Rows p_j over the sample space: p_j[i] = P_{(theta_j, g0(theta_j))}(S = s_i).
inline std::vector<std::vector<double>> build_p_rows(const SampleSpace& space,
                                                     const BoundaryFn& boundary,
                                                     const NullGrid& grid) {
    grid.validate(boundary);
    const Design& dz = space.design();
    std::vector<std::vector<double>> rows(grid.K());
    for (int j = 0; j < grid.K(); ++j) {
        const double tc = grid.thetas[j];
        const double td = boundary.g0(tc);
        std::vector<double> pc(dz.n_C + 1), pd(dz.n_D + 1);
        for (int s = 0; s <= dz.n_C; ++s) pc[s] = binom_pmf(dz.n_C, s, tc);
        for (int s = 0; s <= dz.n_D; ++s) pd[s] = binom_pmf(dz.n_D, s, td);
        auto& row = rows[j];
        row.resize(space.size());
        for (int c = 0; c <= dz.n_C; ++c)
            for (int v = 0; v <= dz.n_D; ++v) row[c * (dz.n_D + 1) + v] = pc[c] * pd[v];
    }
    return rows;
}

// Slack row for interval j: (m_D^T A_D - m_C^T A_C) assembled densely, with
//   m_D[i] = n_D * dt * C(n_C, s_C) * C(n_D-1, s_D-1) * kernel_max
//   m_C[i] = n_C * dt * C(n_C-1, s_C) * C(n_D, s_D)   * kernel_min
// combined with the binomials in log space (coefficients and kernels both
// overflow/underflow separately at large n).
inline std::vector<std::vector<double>> build_slack_rows(const SampleSpace& space,
                                                         const BoundaryFn& boundary,
                                                         const NullGrid& grid,
                                                         const IncidenceRows& inc) {
    grid.validate(boundary);
    if (grid.K() < 2) throw std::domain_error("slack rows need K >= 2");
    const Design& dz = space.design();
    const int n = dz.n();
    std::vector<std::vector<double>> rows(grid.K() - 1);

    // Identity kernels depend on the outcome only through s_C + s_D; cache per sum.
    const bool identity = boundary.kind == BoundaryFn::Kind::identity;
    std::vector<double> kmax_by_sum, kmin_by_sum;

    for (int j = 0; j + 1 < grid.K(); ++j) {
        const double lo = grid.thetas[j], hi = grid.thetas[j + 1];
        const double log_dt = std::log(hi - lo);
        auto& row = rows[j];
        row.assign(space.size(), 0.0);

        if (identity) {
            kmax_by_sum.assign(n + 1, neg_inf);
            kmin_by_sum.assign(n + 1, neg_inf);
            for (int sum = 1; sum <= n; ++sum) {
                auto fmax = [&](double t) { return log_pow(t, sum - 1) + log_pow(1.0 - t, n - sum); };
                double crit = std::min(hi, std::max(lo, double(sum - 1) / (n - 1)));
                kmax_by_sum[sum] = std::max({fmax(lo), fmax(hi), fmax(crit)});
            }
            for (int sum = 0; sum < n; ++sum) {
                auto fmin = [&](double t) { return log_pow(t, sum) + log_pow(1.0 - t, n - sum - 1); };
                kmin_by_sum[sum] = std::min(fmin(lo), fmin(hi));
            }
        }

        for (int p = 0; p < space.size(); ++p) {
            const Outcome s = space.outcome_at(p);
            if (s.s_D >= 1) {
                const double log_k = identity ? kmax_by_sum[s.s_C + s.s_D]
                                              : log_boundary_kernel_max(dz, s, boundary, lo, hi);
                const double log_m = std::log(double(dz.n_D)) + log_dt + log_binom(dz.n_C, s.s_C) +
                                     log_binom(dz.n_D - 1, s.s_D - 1) + log_k;
                const double m = log_m == neg_inf ? 0.0 : std::exp(log_m);
                row[p] += m;
                if (inc.off_D[p] >= 0) row[inc.off_D[p]] -= m;
            }
            if (s.s_C <= dz.n_C - 1) {
                const double log_k = identity ? kmin_by_sum[s.s_C + s.s_D]
                                              : log_boundary_kernel_min(dz, s, boundary, lo, hi);
                const double log_m = std::log(double(dz.n_C)) + log_dt + log_binom(dz.n_C - 1, s.s_C) +
                                     log_binom(dz.n_D, s.s_D) + log_k;
                const double m = log_m == neg_inf ? 0.0 : std::exp(log_m);
                row[p] -= m;
                if (inc.off_C[p] >= 0) row[inc.off_C[p]] += m;
            }
        }
    }
    return rows;
}

struct NullConstraintSet {
    std::vector<std::vector<double>> p_rows;      // K rows
    std::vector<std::vector<double>> slack_rows;  // K-1 rows: m_D^T A_D - m_C^T A_C
    bool heuristic_bounds = false;                // kernel extrema from the sampling fallback
};

inline NullConstraintSet build_null_constraints(const SampleSpace& space, const BoundaryFn& boundary,
                                                const NullGrid& grid) {
    NullConstraintSet out;
    out.p_rows = build_p_rows(space, boundary, grid);
    out.slack_rows = build_slack_rows(space, boundary, grid, IncidenceRows::build(space));
    out.heuristic_bounds = boundary.heuristic_extrema();
    return out;
}

}  // namespace exact2x2
