#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "exact2x2/classical.hpp"
#include "exact2x2/boundary.hpp"
#include "exact2x2/prob.hpp"
#include "exact2x2/sample_space.hpp"

using namespace exact2x2;

namespace {

// Integer binomial coefficients, exact up to n = 60 in long long.
std::vector<std::vector<long long>> pascal(int n) {
    std::vector<std::vector<long long>> c(n + 1);
    for (int i = 0; i <= n; ++i) {
        c[i].assign(i + 1, 1);
        for (int j = 1; j < i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
    }
    return c;
}

// Exact-rational hypergeometric upper tail P(S'_D >= s_D | total).
double hyper_tail_oracle(const Design& d, const Outcome& s,
                         const std::vector<std::vector<long long>>& c) {
    const int total = s.s_C + s.s_D;
    long long num = 0;
    for (int v = s.s_D; v <= std::min(d.n_D, total); ++v) {
        if (total - v > d.n_C) continue;
        num += c[d.n_D][v] * c[d.n_C][total - v];
    }
    return double(num) / double(c[d.n()][total]);
}

double hyper_point_oracle(const Design& d, const Outcome& s,
                          const std::vector<std::vector<long long>>& c) {
    const int total = s.s_C + s.s_D;
    return double(c[d.n_D][s.s_D] * c[d.n_C][s.s_C]) / double(c[d.n()][total]);
}

}  // namespace

TEST_CASE("fisher tail and mid-p match hand-computed values") {
    const Design d22{2, 2};
    // observed (0,2): only the observed table reaches s_D >= 2 given total 2.
    CHECK_THAT(fisher_p(d22, {0, 2}), Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
    CHECK_THAT(fisher_midp(d22, {0, 2}), Catch::Matchers::WithinAbs(1.0 / 12.0, 1e-15));

    // s_D = 0 puts the whole conditional support in the tail.
    CHECK(fisher_p(Design{5, 5}, {3, 0}) == 1.0);
    CHECK(fisher_p(Design{10, 10}, {7, 0}) == 1.0);

    // total 0: a single support point, so mid-p is exactly one half.
    CHECK(fisher_p(d22, {0, 0}) == 1.0);
    CHECK_THAT(fisher_midp(d22, {0, 0}), Catch::Matchers::WithinAbs(0.5, 1e-15));

    CHECK_THROWS_AS(fisher_p(d22, {3, 0}), std::out_of_range);
    CHECK_THROWS_AS(fisher_midp(d22, {0, -1}), std::out_of_range);
}

TEST_CASE("fisher tail agrees with an exact integer hypergeometric oracle") {
    const Design d{5, 7};
    const auto c = pascal(d.n());
    const SampleSpace space(d);
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const double tail = hyper_tail_oracle(d, s, c);
        CHECK_THAT(fisher_p(d, s), Catch::Matchers::WithinRel(tail, 1e-12));
        const double midp = tail - 0.5 * hyper_point_oracle(d, s, c);
        CHECK_THAT(fisher_midp(d, s), Catch::Matchers::WithinAbs(midp, 1e-13));
    }
}

TEST_CASE("pooled z statistic matches closed form and handles degeneracy") {
    const Design d{10, 10};
    const TestStatistic z = statistic(StatKind::z_pooled, d, {3, 7});
    CHECK(z.smaller_is_extreme);
    CHECK_THAT(z.value, Catch::Matchers::WithinAbs(-0.4 / std::sqrt(0.05), 1e-12));

    // all-zero and all-one tables have zero pooled variance and zero numerator.
    CHECK(statistic(StatKind::z_pooled, d, {0, 0}).value == 0.0);
    CHECK(statistic(StatKind::z_pooled, d, {10, 10}).value == 0.0);
}

TEST_CASE("unpooled z statistic applies the sign-of-numerator convention") {
    const Design d{6, 8};
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(statistic(StatKind::z_unpooled, d, {6, 0}, 0.2).value == inf);
    CHECK(statistic(StatKind::z_unpooled, d, {0, 8}, 0.2).value == -inf);
    CHECK(statistic(StatKind::z_unpooled, d, {6, 8}, 0.2).value == inf);
    CHECK(statistic(StatKind::z_unpooled, d, {0, 0}, 0.0).value == 0.0);
    CHECK(statistic(StatKind::z_unpooled, d, {6, 8}, 0.0).value == 0.0);

    const TestStatistic z = statistic(StatKind::z_unpooled, Design{10, 10}, {3, 7}, 0.0);
    CHECK_THAT(z.value, Catch::Matchers::WithinAbs(-0.4 / std::sqrt(0.042), 1e-12));
    CHECK(z.delta == 0.0);

    CHECK_THROWS_AS(statistic(StatKind::z_unpooled, d, {3, 3}, -0.1), std::domain_error);
    // delta only parameterizes the unpooled statistic.
    CHECK(statistic(StatKind::fisher_p, d, {3, 3}, 0.2).delta == 0.0);
}

TEST_CASE("signed root likelihood ratio: sign, ties, and saturated corners") {
    const Design d{6, 5};
    const SampleSpace space(d);
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const TestStatistic t = statistic(StatKind::srlr, d, s);
        CHECK_FALSE(t.smaller_is_extreme);
        CHECK(std::isfinite(t.value));
        const double diff = double(s.s_D) / d.n_D - double(s.s_C) / d.n_C;
        if (diff > 0) CHECK(t.value > 0.0);
        if (diff < 0) CHECK(t.value < 0.0);
        if (diff == 0) CHECK(t.value == 0.0);
    }

    // deviance for (3,7) on 10 vs 10 from the explicit log-likelihoods.
    const double dev =
        2.0 * (6.0 * std::log(0.3) + 14.0 * std::log(0.7) - 20.0 * std::log(0.5));
    const TestStatistic t = statistic(StatKind::srlr, Design{10, 10}, {3, 7});
    CHECK_THAT(t.value, Catch::Matchers::WithinAbs(std::sqrt(dev), 1e-12));
}

TEST_CASE("level sets are closed and ordered by the reference statistic") {
    const Design d{4, 4};
    const SampleSpace space(d);
    for (const StatKind kind : {StatKind::fisher_p, StatKind::fisher_midp, StatKind::z_pooled,
                                StatKind::z_unpooled, StatKind::srlr}) {
        const Outcome obs{1, 3};
        const DecisionVector cells = level_set(kind, space, obs);
        CHECK(cells.get(space.pos(obs)));  // ties (the observed value itself) included
        const TestStatistic ref = statistic(kind, d, obs);
        for (int p = 0; p < space.size(); ++p) {
            const TestStatistic ts = statistic(kind, d, space.outcome_at(p));
            const bool extreme =
                ref.smaller_is_extreme ? ts.value <= ref.value : ts.value >= ref.value;
            CHECK(cells.get(p) == extreme);
        }
    }
}

TEST_CASE("singleton theta range reproduces the exact tail of the level set") {
    const Design d{5, 5};
    const SampleSpace space(d);
    const Outcome obs{1, 4};
    for (const StatKind kind : {StatKind::fisher_p, StatKind::fisher_midp, StatKind::z_pooled,
                                StatKind::z_unpooled, StatKind::srlr}) {
        const UncondResult r = uncond_exact_p(kind, d, obs, std::make_pair(0.3, 0.3));
        const DecisionVector cells = level_set(kind, space, obs);
        CHECK(r.p_value == rejection_rate(space, cells, Theta{0.3, 0.3}));
        CHECK(r.maximizing_theta == 0.3);
        CHECK(r.method == UncondResult::Method::grid_refine);
        CHECK(r.gamma == 0.0);
    }
}

TEST_CASE("unconditional p dominates every sampled null tail") {
    const Design d{5, 5};
    const SampleSpace space(d);
    const Outcome obs{1, 4};
    const UncondResult r = uncond_exact_p(StatKind::z_pooled, d, obs);
    const DecisionVector cells = level_set(StatKind::z_pooled, space, obs);
    for (int i = 0; i <= 100; ++i) {
        const double theta = i / 100.0;
        CHECK(rejection_rate(space, cells, Theta{theta, theta}) <= r.p_value + 1e-12);
    }
    // the reported maximizer attains the reported supremum.
    CHECK_THAT(rejection_rate(space, cells, Theta{r.maximizing_theta, r.maximizing_theta}),
               Catch::Matchers::WithinAbs(r.p_value, 1e-12));

    CHECK_THROWS_AS(uncond_exact_p(StatKind::z_pooled, d, obs, std::make_pair(0.6, 0.4)),
                    std::domain_error);
    CHECK_THROWS_AS(uncond_exact_p(StatKind::z_pooled, d, obs, std::make_pair(-0.1, 0.5)),
                    std::domain_error);
    CHECK_THROWS_AS(uncond_exact_p(StatKind::z_pooled, d, obs, std::make_pair(0.0, 1.1)),
                    std::domain_error);
}

TEST_CASE("estimated-rate p never exceeds the full unconditional supremum") {
    const Design d{5, 5};
    for (const StatKind kind : {StatKind::z_pooled, StatKind::srlr}) {
        for (const Outcome obs : {Outcome{1, 4}, Outcome{0, 3}, Outcome{2, 5}}) {
            const double est = estimated_p(kind, d, obs);
            const UncondResult full = uncond_exact_p(kind, d, obs);
            CHECK(est <= full.p_value + 1e-12);
        }
    }
    // degenerate pooled estimate: the all-zero table is its own level set mass.
    CHECK(estimated_p(StatKind::z_pooled, d, {0, 0}) == 1.0);
    CHECK_THROWS_AS(estimated_p(StatKind::fisher_p, d, {1, 4}), std::invalid_argument);
    CHECK_THROWS_AS(estimated_p(StatKind::z_unpooled, d, {1, 4}), std::invalid_argument);
}

TEST_CASE("confidence-interval restriction stays within gamma of the full supremum") {
    const Design d{10, 10};
    const Outcome obs{3, 7};
    const double gamma = 0.0005;
    const UncondResult bb = berger_boos_p(StatKind::z_pooled, d, obs, gamma);
    const UncondResult ux = uncond_exact_p(StatKind::z_pooled, d, obs);
    CHECK(bb.method == UncondResult::Method::berger_boos);
    CHECK(bb.gamma == gamma);
    CHECK(bb.p_value - gamma <= ux.p_value + 1e-12);

    const auto [lo, hi] = clopper_pearson(obs.s_C + obs.s_D, d.n(), 1.0 - gamma);
    CHECK(bb.maximizing_theta >= lo - 1e-12);
    CHECK(bb.maximizing_theta <= hi + 1e-12);

    CHECK_THROWS_AS(berger_boos_p(StatKind::z_pooled, d, obs, 0.0), std::domain_error);
    CHECK_THROWS_AS(berger_boos_p(StatKind::z_pooled, d, obs, 0.5), std::domain_error);
}

TEST_CASE("regions built from p-value thresholds behave at the extremes") {
    const Design d{5, 5};
    const SampleSpace space(d);

    const RegionReport all = region_from_test(StatKind::fisher_p, space, 1.0);
    CHECK(all.region.count() == space.size());
    const RegionReport none = region_from_test(StatKind::fisher_p, space, 0.0);
    CHECK(none.region.count() == 0);

    const RegionReport mid = region_from_test(StatKind::fisher_midp, space, 0.05);
    CHECK(mid.convex == is_convex(space, mid.region));
    CHECK(mid.region.count() > 0);
    CHECK(mid.region.count() < space.size());

    CHECK_THROWS_AS(region_from_test(StatKind::z_pooled, space, 0.05), std::invalid_argument);
}

TEST_CASE("unconditional regions are exact along the equal-rate null") {
    const Design d{5, 5};
    const SampleSpace space(d);
    const double alpha = 0.05;

    const RegionReport ux_mid = region_from_test(
        space,
        [&d](const Outcome& s) { return uncond_exact_p(StatKind::fisher_midp, d, s).p_value; },
        alpha);
    const RegionReport fe = region_from_test(StatKind::fisher_p, space, alpha);
    CHECK(ux_mid.region.count() >= fe.region.count());

    for (int i = 0; i <= 1000; ++i) {
        const double theta = i / 1000.0;
        CHECK(rejection_rate(space, ux_mid.region, Theta{theta, theta}) <= alpha + 1e-9);
        CHECK(rejection_rate(space, fe.region, Theta{theta, theta}) <= alpha + 1e-9);
    }
}

TEST_CASE("fisher region is exact conditionally on every total") {
    const Design d{6, 6};
    const SampleSpace space(d);
    const double alpha = 0.1;
    const RegionReport fe = region_from_test(StatKind::fisher_p, space, alpha);
    const auto c = pascal(d.n());
    for (int total = 0; total <= d.n(); ++total) {
        double cond = 0.0;
        for (int v = std::max(0, total - d.n_C); v <= std::min(d.n_D, total); ++v) {
            const Outcome s{total - v, v};
            if (fe.region.get(space.pos(s))) cond += hyper_point_oracle(d, s, c);
        }
        CHECK(cond <= alpha + 1e-12);
    }
}

TEST_CASE("unpooled z with a margin boundary maximizes over the shifted null") {
    const Design d{4, 4};
    const double delta = 0.2;
    const BoundaryFn boundary = BoundaryFn::margin(delta);
    const SampleSpace space(d);

    const UncondResult r =
        uncond_exact_p(StatKind::z_unpooled, d, {0, 3}, std::nullopt, boundary, delta);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(r.maximizing_theta >= 0.0);
    CHECK(r.maximizing_theta <= boundary.domain_hi() + 1e-12);

    const double alpha = 0.1;
    const RegionReport region = region_from_test(
        space,
        [&](const Outcome& s) {
            return uncond_exact_p(StatKind::z_unpooled, d, s, std::nullopt, boundary, delta).p_value;
        },
        alpha);
    const int steps = 1000;
    for (int i = 0; i <= steps; ++i) {
        const double theta = boundary.domain_hi() * i / steps;
        const Theta th{theta, boundary.g0(theta)};
        CHECK(rejection_rate(space, region.region, th) <= alpha + 1e-9);
    }
}
