#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "exact2x2/boundary.hpp"
#include "exact2x2/ilp.hpp"
#include "exact2x2/mps.hpp"
#include "exact2x2/power.hpp"
#include "exact2x2/sample_space.hpp"
#include "test_support.hpp"

using namespace exact2x2;

namespace {

constexpr double kTol = 2.5e-4;

ILPModel apk_model(const SampleSpace& space, double alpha, int grid_points) {
    const auto boundary = BoundaryFn::identity();
    const auto grid = NullGrid::with_step(boundary, 1.0 / (grid_points - 1));
    const auto cons = build_null_constraints(space, boundary, grid);
    return build_apk_model(cons.p_rows, cons.slack_rows, avg_power_coeffs(space), alpha,
                           IncidenceRows::build(space));
}

std::vector<std::vector<double>> spread_alt_rows(const SampleSpace& space, int count) {
    std::vector<Theta> pts;
    for (int j = 0; j < count; ++j) {
        const double c = 0.05 + 0.8 * j / std::max(1, count - 1);
        pts.push_back(Theta{c, std::min(1.0, c + 0.1)});
    }
    return alt_power_rows(space, pts);
}

ILPModel mpk_model(const SampleSpace& space, double alpha, int grid_points, int alt_count) {
    const auto boundary = BoundaryFn::identity();
    const auto grid = NullGrid::with_step(boundary, 1.0 / (grid_points - 1));
    const auto cons = build_null_constraints(space, boundary, grid);
    return build_mpk_model(cons.p_rows, cons.slack_rows, spread_alt_rows(space, alt_count), alpha,
                           IncidenceRows::build(space));
}

// Exhaustive optimum over every monotone threshold region.
double brute_force_opt(const SampleSpace& space, const ILPModel& m) {
    std::vector<const LeRow*> type1, alts;
    for (const auto& r : m.le_constraints)
        (r.cont_coeff == 0.0 ? type1 : alts).push_back(&r);
    double best = -1e300;
    testsupport::for_each_threshold_vector(space.design().n_C, space.design().n_D, [&](const std::vector<int>& t) {
        const DecisionVector d = from_thresholds(space, t);
        for (const LeRow* r : type1)
            if (masked_sum(r->a, d) > r->rhs + 1e-9) return;
        double value;
        if (alts.empty()) {
            value = masked_sum(m.objective, d);
        } else {
            value = 1e300;
            for (const LeRow* r : alts) value = std::min(value, -masked_sum(r->a, d));
        }
        best = std::max(best, value);
    });
    return best;
}

void check_feasible(const SampleSpace& space, const ILPModel& m, const SolveResult& res) {
    REQUIRE(res.status == SolveStatus::optimal_within_tol);
    REQUIRE(is_convex(space, res.decision));
    for (const auto& r : m.le_constraints) {
        if (r.cont_coeff != 0.0) continue;
        REQUIRE(masked_sum(r.a, res.decision) <= r.rhs + 1e-9);
    }
    REQUIRE(res.abs_gap >= 0.0);
    REQUIRE(res.abs_gap <= kTol + 1e-12);
}

}  // namespace

TEST_CASE("apk model construction emits the expected rows and pairs") {
    SampleSpace space(Design{1, 1});
    const auto boundary = BoundaryFn::identity();
    const auto grid = NullGrid::with_step(boundary, 1.0);  // two grid points
    const auto cons = build_null_constraints(space, boundary, grid);
    REQUIRE(cons.p_rows.size() == 2);
    REQUIRE(cons.slack_rows.size() == 1);
    const auto coeffs = avg_power_coeffs(space);
    const auto m = build_apk_model(cons.p_rows, cons.slack_rows, coeffs, 0.05, IncidenceRows::build(space));

    CHECK(m.binary_count == 4);
    CHECK(m.cols == 2);
    CHECK(m.rows_per_col == 2);
    CHECK(m.le_constraints.size() == 3);  // K + (K-1)
    CHECK(m.precedence.size() == 4);      // n_C(n_D+1) + (n_C+1)n_D
    for (const auto& r : m.le_constraints) CHECK(r.rhs == 0.05);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m.le_constraints[0].a[i] == cons.p_rows[0][i]);
        CHECK(m.le_constraints[2].a[i] == cons.p_rows[0][i] + cons.slack_rows[0][i]);
    }
    // Every pair (i,k) encodes d_k >= d_i along a grid edge.
    SampleSpace check_space(Design{1, 1});
    for (const auto& [i, k] : m.precedence) {
        const Outcome si = check_space.outcome_at(i), sk = check_space.outcome_at(k);
        const bool cside = si.s_C == sk.s_C + 1 && si.s_D == sk.s_D;
        const bool dside = si.s_C == sk.s_C && si.s_D + 1 == sk.s_D;
        CHECK((cside || dside));
    }
}

TEST_CASE("model builders validate their inputs") {
    SampleSpace space(Design{1, 1});
    const auto inc = IncidenceRows::build(space);
    const std::vector<std::vector<double>> p{{0.1, 0.1, 0.1, 0.1}, {0.2, 0.2, 0.2, 0.2}};
    const std::vector<std::vector<double>> s{{0.0, 0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(build_apk_model(p, s, std::vector<double>(3, 0.0), 0.05, inc), std::invalid_argument);
    CHECK_THROWS_AS(build_apk_model(p, {}, std::vector<double>(4, 0.0), 0.05, inc), std::invalid_argument);
    CHECK_THROWS_AS(build_apk_model(p, s, std::vector<double>(4, 0.0), 0.0, inc), std::invalid_argument);
    CHECK_THROWS_AS(build_mpk_model(p, s, {}, 0.05, inc), std::invalid_argument);
}

TEST_CASE("all-zero objective returns the empty region at value zero") {
    SampleSpace space(Design{2, 2});
    ILPModel m = apk_model(space, 0.05, 11);
    m.objective.assign(m.binary_count, 0.0);
    const SolveResult res = solve(m);
    REQUIRE(res.status == SolveStatus::optimal_within_tol);
    CHECK_FALSE(res.decision.any());
    CHECK(res.objective_value == 0.0);
}

TEST_CASE("average-power optimum matches the exhaustive ideal enumeration") {
    SampleSpace space(Design{3, 3});
    const ILPModel m = apk_model(space, 0.025, 1001);
    const SolveResult res = solve(m);
    check_feasible(space, m, res);
    const double brute = brute_force_opt(space, m);
    CHECK(res.objective_value == Catch::Approx(brute).epsilon(0).margin(kTol));
    CHECK(res.best_bound >= brute - 1e-12);
}

TEST_CASE("solver equals brute force across designs, levels, and objectives") {
    const std::vector<Design> designs{{1, 2}, {2, 2}, {1, 4}, {3, 3}, {2, 4}};
    for (const Design& dz : designs) {
        SampleSpace space(dz);
        for (const double alpha : {0.01, 0.025, 0.05, 0.10}) {
            for (const bool maximin : {false, true}) {
                const ILPModel m =
                    maximin ? mpk_model(space, alpha, 101, 4) : apk_model(space, alpha, 101);
                const SolveResult res = solve(m);
                INFO("design (" << dz.n_C << "," << dz.n_D << ") alpha " << alpha << " maximin "
                                << maximin);
                check_feasible(space, m, res);
                const double brute = brute_force_opt(space, m);
                CHECK(res.objective_value == Catch::Approx(brute).epsilon(0).margin(kTol));
            }
        }
    }
}

TEST_CASE("maximin with five alternatives matches enumeration and one-row reduction") {
    SampleSpace space(Design{3, 3});
    const ILPModel m = mpk_model(space, 0.05, 201, 5);
    const SolveResult res = solve(m);
    check_feasible(space, m, res);
    CHECK(res.objective_value == Catch::Approx(brute_force_opt(space, m)).epsilon(0).margin(kTol));

    // A single alternative row is plain maximization of that row's power.
    const auto boundary = BoundaryFn::identity();
    const auto grid = NullGrid::with_step(boundary, 0.005);
    const auto cons = build_null_constraints(space, boundary, grid);
    const auto inc = IncidenceRows::build(space);
    const auto one_row = alt_power_rows(space, {Theta{0.2, 0.7}});
    const ILPModel single = build_mpk_model(cons.p_rows, cons.slack_rows, one_row, 0.05, inc);
    ILPModel direct = build_apk_model(cons.p_rows, cons.slack_rows, one_row[0], 0.05, inc);
    const SolveResult rs = solve(single);
    const SolveResult rd = solve(direct);
    CHECK(rs.objective_value == Catch::Approx(rd.objective_value).epsilon(0).margin(2 * kTol));
}

TEST_CASE("optimal value is nondecreasing in alpha") {
    SampleSpace space(Design{3, 3});
    double prev = -1.0;
    for (const double alpha : {0.01, 0.02, 0.05, 0.10, 0.20}) {
        const SolveResult res = solve(apk_model(space, alpha, 201));
        CHECK(res.objective_value >= prev - 2 * kTol);
        prev = res.objective_value;
    }
}

TEST_CASE("bound vectors nest the returned regions") {
    SampleSpace space(Design{3, 3});
    const SolveResult at_low = solve(apk_model(space, 0.01, 201));
    const SolveResult at_high = solve(apk_model(space, 0.05, 201));
    REQUIRE(at_low.status == SolveStatus::optimal_within_tol);

    const SolveResult up = solve(apk_model(space, 0.05, 201), 2.5e-4, at_low.decision, std::nullopt);
    REQUIRE(up.status == SolveStatus::optimal_within_tol);
    CHECK(at_low.decision.subset_of(up.decision));

    const SolveResult down = solve(apk_model(space, 0.01, 201), 2.5e-4, std::nullopt, at_high.decision);
    REQUIRE(down.status == SolveStatus::optimal_within_tol);
    CHECK(down.decision.subset_of(at_high.decision));

    // Conflicting bounds: force a superset of a region that is not below the cap.
    if (at_high.decision != at_low.decision && !at_high.decision.subset_of(at_low.decision)) {
        const SolveResult bad =
            solve(apk_model(space, 0.05, 201), 2.5e-4, at_high.decision, at_low.decision);
        CHECK(bad.status == SolveStatus::infeasible);
    }
}

TEST_CASE("repeated solves return the identical region") {
    SampleSpace space(Design{3, 3});
    const ILPModel m = apk_model(space, 0.025, 501);
    const SolveResult a = solve(m);
    const SolveResult b = solve(m);
    CHECK(a.decision == b.decision);
    CHECK(a.objective_value == b.objective_value);
}

TEST_CASE("infeasible warm starts are ignored") {
    SampleSpace space(Design{2, 2});
    const ILPModel m = apk_model(space, 0.025, 101);
    SolveLimits limits;
    DecisionVector full(space.size());
    for (int i = 0; i < space.size(); ++i) full.set(i, true);
    limits.warm_starts.push_back(full);
    const SolveResult res = solve(m, 2.5e-4, std::nullopt, std::nullopt, limits);
    check_feasible(space, m, res);
    CHECK(res.objective_value == Catch::Approx(brute_force_opt(space, m)).epsilon(0).margin(kTol));
}

TEST_CASE("mps export and re-parse reproduce the model") {
    SampleSpace space(Design{1, 1});
    const auto roundtrip = [](const ILPModel& m) {
        std::stringstream ss;
        export_mps(m, ss);
        const ILPModel r = read_mps(ss);
        REQUIRE(r.binary_count == m.binary_count);
        CHECK(r.cols == m.cols);
        CHECK(r.rows_per_col == m.rows_per_col);
        CHECK(r.has_continuous == m.has_continuous);
        CHECK(r.continuous_objective == Catch::Approx(m.continuous_objective).epsilon(0).margin(1e-12));
        for (int i = 0; i < m.binary_count; ++i)
            CHECK(r.objective[i] == Catch::Approx(m.objective[i]).epsilon(0).margin(1e-12));
        REQUIRE(r.le_constraints.size() == m.le_constraints.size());
        for (std::size_t j = 0; j < m.le_constraints.size(); ++j) {
            CHECK(r.le_constraints[j].rhs ==
                  Catch::Approx(m.le_constraints[j].rhs).epsilon(0).margin(1e-12));
            CHECK(r.le_constraints[j].cont_coeff == m.le_constraints[j].cont_coeff);
            for (int i = 0; i < m.binary_count; ++i)
                CHECK(r.le_constraints[j].a[i] ==
                      Catch::Approx(m.le_constraints[j].a[i]).epsilon(0).margin(1e-12));
        }
        REQUIRE(r.precedence == m.precedence);
    };

    roundtrip(apk_model(space, 0.05, 2));
    roundtrip(mpk_model(space, 0.05, 3, 2));

    ILPModel bare;  // objective and bounds only
    bare.binary_count = 4;
    bare.cols = 2;
    bare.rows_per_col = 2;
    bare.objective = {0.25, 0.75, 0.5, 0.125};
    roundtrip(bare);
}

TEST_CASE("solved mps model and source model agree") {
    SampleSpace space(Design{2, 3});
    const ILPModel m = apk_model(space, 0.05, 101);
    std::stringstream ss;
    export_mps(m, ss);
    const ILPModel r = read_mps(ss);
    const SolveResult a = solve(m);
    const SolveResult b = solve(r);
    CHECK(a.objective_value == Catch::Approx(b.objective_value).epsilon(0).margin(1e-9));
    CHECK(a.decision == b.decision);
}
