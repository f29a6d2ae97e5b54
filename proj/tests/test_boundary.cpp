#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "exact2x2/boundary.hpp"
#include "test_support.hpp"

using namespace exact2x2;

TEST_CASE("default grids run from 0 to the boundary domain end") {
    const NullGrid gi = NullGrid::with_step(BoundaryFn::identity());
    CHECK(gi.K() == 1001);
    CHECK(gi.thetas.front() == 0.0);
    CHECK(gi.thetas.back() == 1.0);

    const BoundaryFn margin = BoundaryFn::margin(0.2);
    const NullGrid gm = NullGrid::with_step(margin);
    CHECK(gm.K() == 801);
    CHECK(gm.thetas.back() == margin.domain_hi());

    CHECK_THROWS_AS(NullGrid::from_points(BoundaryFn::identity(), {0.0, 0.5, 0.5, 1.0}),
                    std::domain_error);
    CHECK_THROWS_AS(NullGrid::from_points(BoundaryFn::identity(), {0.1, 1.0}), std::domain_error);
}

TEST_CASE("cubic roots recover constructed factorizations") {
    auto sorted = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v;
    };

    // (x-0.3)(x-0.5)(x-0.7) = x^3 - 1.5x^2 + 0.71x - 0.105
    auto r = sorted(cubic_real_roots(1.0, -1.5, 0.71, -0.105));
    REQUIRE(r.size() == 3);
    CHECK_THAT(r[0], Catch::Matchers::WithinAbs(0.3, 1e-10));
    CHECK_THAT(r[1], Catch::Matchers::WithinAbs(0.5, 1e-10));
    CHECK_THAT(r[2], Catch::Matchers::WithinAbs(0.7, 1e-10));

    // (x-0.5)^2 (x-0.2) = x^3 - 1.2x^2 + 0.45x - 0.05
    r = sorted(cubic_real_roots(1.0, -1.2, 0.45, -0.05));
    REQUIRE(r.size() == 3);
    CHECK_THAT(r[0], Catch::Matchers::WithinAbs(0.2, 1e-8));
    CHECK_THAT(r[1], Catch::Matchers::WithinAbs(0.5, 1e-8));
    CHECK_THAT(r[2], Catch::Matchers::WithinAbs(0.5, 1e-8));

    // Degenerate leading coefficient: 0.x^3 + x^2 - 0.7x + 0.1 with roots 0.2, 0.5.
    r = sorted(cubic_real_roots(0.0, 1.0, -0.7, 0.1));
    REQUIRE(r.size() == 2);
    CHECK_THAT(r[0], Catch::Matchers::WithinAbs(0.2, 1e-12));
    CHECK_THAT(r[1], Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("derivative-bracket roots have small residuals when all real") {
    // Exponent tuple for the D-side kernel at design (10,10), delta 0.2, s=(3,4).
    const auto q = detail::margin_bracket_cubic(3, 3, 7, 6, 0.2);
    auto cubic = [&](double x) { return ((q.a * x + q.b) * x + q.c) * x + q.d; };
    const double disc = 18.0 * q.a * q.b * q.c * q.d - 4.0 * q.b * q.b * q.b * q.d +
                        q.b * q.b * q.c * q.c - 4.0 * q.a * q.c * q.c * q.c -
                        27.0 * q.a * q.a * q.d * q.d;
    REQUIRE(disc > 0.0);  // three distinct real roots for this instance
    const double scale = std::max({std::fabs(q.a), std::fabs(q.b), std::fabs(q.c), std::fabs(q.d), 1.0});
    for (double root : cubic_real_roots(q.a, q.b, q.c, q.d))
        CHECK(std::fabs(cubic(root)) <= 1e-8 * scale);
}

TEST_CASE("identity kernel extrema match hand values and the structural-zero convention") {
    const Design dz{2, 2};
    const BoundaryFn b = BoundaryFn::identity();
    // Kernel t(1-t)^2 peaks at 1/3 < 0.4, so the max over [0.4, 0.6] is at 0.4.
    CHECK_THAT(boundary_kernel_max(dz, {1, 1}, b, 0.4, 0.6),
               Catch::Matchers::WithinAbs(0.4 * 0.36, 1e-14));
    // Kernel t^2 (1-t) is increasing then decreasing; min over [0.4,0.6] at 0.4.
    CHECK_THAT(boundary_kernel_min(dz, {1, 1}, b, 0.4, 0.6),
               Catch::Matchers::WithinAbs(0.16 * 0.6, 1e-14));

    CHECK(boundary_kernel_max(dz, {1, 0}, b, 0.1, 0.2) == 0.0);  // s_D = 0
    CHECK(boundary_kernel_min(dz, {2, 1}, b, 0.1, 0.2) == 0.0);  // s_C = n_C
}

TEST_CASE("kernel extrema agree with a dense-grid oracle") {
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::vector<Design> designs = {{2, 2}, {5, 3}, {10, 10}, {4, 9}};
    const std::vector<BoundaryFn> boundaries = {BoundaryFn::identity(), BoundaryFn::margin(0.05),
                                                BoundaryFn::margin(0.2)};
    for (const auto& b : boundaries) {
        for (int it = 0; it < 60; ++it) {
            const Design dz = designs[it % designs.size()];
            const Outcome s{int(unif(rng) * (dz.n_C + 1)), int(unif(rng) * (dz.n_D + 1))};
            const double hi_dom = b.domain_hi();
            double lo = unif(rng) * hi_dom;
            double width = (it % 3 == 0 ? 0.05 : 0.002) * unif(rng);
            double hi = std::min(hi_dom, lo + width + 1e-6);
            CHECK_THAT(boundary_kernel_max(dz, s, b, lo, hi),
                       Catch::Matchers::WithinAbs(
                           testsupport::dense_kernel_max_oracle(dz, s, b, lo, hi), 1e-10));
            CHECK_THAT(boundary_kernel_min(dz, s, b, lo, hi),
                       Catch::Matchers::WithinAbs(
                           testsupport::dense_kernel_min_oracle(dz, s, b, lo, hi), 1e-10));
        }
    }
}

TEST_CASE("custom boundary uses the sampling heuristic and matches a shifted closed form") {
    const BoundaryFn shifted = BoundaryFn::custom([](double t) { return std::min(1.0, t + 0.3); },
                                                  [](double) { return 1.0; }, 0.7);
    const BoundaryFn margin = BoundaryFn::margin(0.3);
    CHECK(shifted.heuristic_extrema());
    CHECK_FALSE(margin.heuristic_extrema());

    const Design dz{6, 5};
    for (const Outcome s : {Outcome{2, 3}, Outcome{0, 1}, Outcome{5, 5}}) {
        CHECK_THAT(boundary_kernel_max(dz, s, shifted, 0.1, 0.45),
                   Catch::Matchers::WithinAbs(boundary_kernel_max(dz, s, margin, 0.1, 0.45), 1e-9));
        CHECK_THAT(boundary_kernel_min(dz, s, shifted, 0.1, 0.45),
                   Catch::Matchers::WithinAbs(boundary_kernel_min(dz, s, margin, 0.1, 0.45), 1e-9));
    }
}

TEST_CASE("probability rows are boundary pmfs with unit mass") {
    const SampleSpace space = enumerate({2, 2});
    const BoundaryFn b = BoundaryFn::identity();
    const NullGrid grid = NullGrid::from_points(b, {0.0, 0.5, 1.0});
    const auto rows = build_p_rows(space, b, grid);
    REQUIRE(rows.size() == 3);

    for (int p = 0; p < space.size(); ++p) {
        CHECK(rows[0][p] == (p == space.pos({0, 0}) ? 1.0 : 0.0));
        CHECK(rows[2][p] == (p == space.pos({2, 2}) ? 1.0 : 0.0));
    }
    for (const auto& row : rows) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
    // Midpoint row is the product pmf with denominator 16.
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const double expect = binom_pmf(2, s.s_C, 0.5) * binom_pmf(2, s.s_D, 0.5);
        CHECK_THAT(rows[1][p], Catch::Matchers::WithinAbs(expect, 1e-15));
    }
}

TEST_CASE("smallest legal grid produces one finite slack row") {
    const SampleSpace space = enumerate({2, 2});
    const BoundaryFn b = BoundaryFn::identity();
    const NullGrid grid = NullGrid::from_points(b, {0.0, 1.0});
    const auto slack = build_slack_rows(space, b, grid, IncidenceRows::build(space));
    REQUIRE(slack.size() == 1);
    for (double v : slack[0]) CHECK(std::isfinite(v));

    DecisionVector zeros(space.size());
    CHECK(masked_sum(slack[0], zeros) == 0.0);
}

TEST_CASE("interval bound dominates the rejection rate inside each cell") {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (const BoundaryFn& b : {BoundaryFn::identity(), BoundaryFn::margin(0.2)}) {
        const SampleSpace space = enumerate({3, 3});
        const NullGrid grid = NullGrid::with_step(b, 0.01);
        const auto cons = build_null_constraints(space, b, grid);
        CHECK_FALSE(cons.heuristic_bounds);

        for (int r = 0; r < 5; ++r) {
            const DecisionVector d = testsupport::random_convex_region(rng, space);
            const auto t = thresholds_of(space, d);
            REQUIRE(t.has_value());
            for (int j = 0; j + 1 < grid.K(); ++j) {
                const double bound = masked_sum(cons.p_rows[j], d) +
                                     std::max(0.0, masked_sum(cons.slack_rows[j], d));
                for (int k = 0; k < 20; ++k) {
                    const double theta =
                        grid.thetas[j] + unif(rng) * (grid.thetas[j + 1] - grid.thetas[j]);
                    const double rate =
                        rejection_rate_thresholds(space, *t, {theta, b.g0(theta)});
                    CHECK(rate <= bound + 1e-12);
                }
            }
        }
    }
}
