#pragma once

// Linear power objectives over the sample space: exact average-power
// coefficients under the uniform (or independent-beta) alternative measure,
// the margin-case average computed by quadrature, and per-point alternative
// rows for maximin objectives.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"
#include "exact2x2/util.hpp"

namespace exact2x2 {

struct BetaPrior {
    int alpha_C = 1;
    int beta_C = 1;
    int alpha_D = 1;
    int beta_D = 1;

    bool uniform() const { return alpha_C == 1 && beta_C == 1 && alpha_D == 1 && beta_D == 1; }
    void validate() const {
        if (alpha_C < 1 || beta_C < 1 || alpha_D < 1 || beta_D < 1)
            throw std::domain_error("beta prior parameters must be integers >= 1");
    }
};

struct ObjectiveSpec {
    enum class Kind { average, weighted_average, maximin, margin_average };

    Kind kind = Kind::average;
    BetaPrior prior;               // weighted_average
    std::vector<Theta> alt_points; // maximin
    double delta = 0.0;            // margin_average

    static ObjectiveSpec average() { return ObjectiveSpec{}; }
    static ObjectiveSpec weighted_average(BetaPrior p) {
        p.validate();
        ObjectiveSpec o;
        o.kind = Kind::weighted_average;
        o.prior = p;
        return o;
    }
    static ObjectiveSpec maximin(std::vector<Theta> pts) {
        if (pts.empty()) throw std::domain_error("maximin objective needs at least one alternative point");
        ObjectiveSpec o;
        o.kind = Kind::maximin;
        o.alt_points = std::move(pts);
        return o;
    }
    static ObjectiveSpec margin_average(double delta) {
        if (!(delta >= 0.0) || !(delta < 1.0)) throw std::domain_error("margin objective: delta out of [0,1)");
        ObjectiveSpec o;
        o.kind = Kind::margin_average;
        o.delta = delta;
        return o;
    }

    void validate() const {
        switch (kind) {
            case Kind::average: return;
            case Kind::weighted_average: prior.validate(); return;
            case Kind::maximin:
                if (alt_points.empty())
                    throw std::domain_error("maximin objective needs at least one alternative point");
                return;
            case Kind::margin_average:
                if (!(delta >= 0.0) || !(delta < 1.0))
                    throw std::domain_error("margin objective: delta out of [0,1)");
                return;
        }
        throw std::logic_error("objective spec: unknown kind");
    }
};

// Probability that the developmental arm's success rate exceeds the control
// arm's, per outcome, under independent Beta posteriors with integer
// parameters; the basis of both average-power variants. The closed form is
//   C(n_C,s_C) C(n_D,s_D) B(aD,bD) sum_{j<aD} B(aC+j, bC+bD) / ((bD+j) B(j+1,bD))
// with aX = s_X + prior alpha, bX = n_X - s_X + prior beta, accumulated in
// log space term by term and normalized to unit sum at the end.
inline std::vector<double> weighted_avg_power_coeffs(const SampleSpace& space, const BetaPrior& prior) {
    prior.validate();
    const Design& dz = space.design();
    std::vector<double> out(space.size());
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const int aC = s.s_C + prior.alpha_C;
        const int bC = dz.n_C - s.s_C + prior.beta_C;
        const int aD = s.s_D + prior.alpha_D;
        const int bD = dz.n_D - s.s_D + prior.beta_D;
        const double log_front =
            log_binom(dz.n_C, s.s_C) + log_binom(dz.n_D, s.s_D) + log_beta(aD, bD);
        double sum = 0.0;
        for (int j = 0; j < aD; ++j) {
            sum += std::exp(log_front + log_beta(aC + j, bC + bD) - std::log(double(bD + j)) -
                            log_beta(j + 1, bD));
        }
        out[p] = sum;
    }
    double total = 0.0;
    for (double v : out) total += v;
    for (double& v : out) v /= total;
    return out;
}

inline std::vector<double> avg_power_coeffs(const SampleSpace& space) {
    return weighted_avg_power_coeffs(space, BetaPrior{});
}

// Margin-case average power coefficients: the alternative measure is uniform
// on {theta_D >= theta_C + delta}, area (1-delta)^2/2. Reduces to a 1-D
// integral of the control pmf against the finite incomplete-beta tail sum.
inline std::vector<double> margin_avg_power_coeffs(const SampleSpace& space, double delta,
                                                   double abs_tol = 1e-9) {
    if (!(delta >= 0.0) || !(delta < 1.0)) throw std::domain_error("margin coefficients: delta out of [0,1)");
    const Design& dz = space.design();
    std::vector<double> out(space.size());
    const double norm = 2.0 / ((1.0 - delta) * (1.0 - delta));
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const int aD = s.s_D + 1;
        const int bD = dz.n_D - s.s_D + 1;
        // Tail weights of the inner integral; C(n_D,s_D) B(aD,bD) = 1/(n_D+1).
        std::vector<double> log_w(aD);
        for (int k = 0; k < aD; ++k)
            log_w[k] = -std::log(double(dz.n_D + 1)) - std::log(double(bD + k)) - log_beta(k + 1, bD);
        auto integrand = [&](double theta) {
            const double x = theta + delta;
            double tail = 0.0;
            for (int k = 0; k < aD; ++k)
                tail += std::exp(log_w[k] + log_pow(x, k) + log_pow(1.0 - x, bD));
            return binom_pmf(dz.n_C, s.s_C, theta) * tail;
        };
        out[p] = norm * integrate(integrand, 0.0, 1.0 - delta, abs_tol / norm);
    }
    return out;
}

// One pmf row per alternative parameter point.
inline std::vector<std::vector<double>> alt_power_rows(const SampleSpace& space,
                                                       const std::vector<Theta>& alt_points) {
    const Design& dz = space.design();
    std::vector<std::vector<double>> rows;
    rows.reserve(alt_points.size());
    for (const Theta& t : alt_points) {
        if (t.theta_C < 0.0 || t.theta_C > 1.0 || t.theta_D < 0.0 || t.theta_D > 1.0)
            throw std::domain_error("alternative point outside [0,1]^2");
        std::vector<double> pc(dz.n_C + 1), pd(dz.n_D + 1);
        for (int s = 0; s <= dz.n_C; ++s) pc[s] = binom_pmf(dz.n_C, s, t.theta_C);
        for (int s = 0; s <= dz.n_D; ++s) pd[s] = binom_pmf(dz.n_D, s, t.theta_D);
        std::vector<double> row(space.size());
        for (int c = 0; c <= dz.n_C; ++c)
            for (int v = 0; v <= dz.n_D; ++v) row[c * (dz.n_D + 1) + v] = pc[c] * pd[v];
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace exact2x2
