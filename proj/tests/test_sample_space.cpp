#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "exact2x2/sample_space.hpp"
#include "test_support.hpp"

using namespace exact2x2;

TEST_CASE("enumeration order is row-major lexicographic with 1-based indices") {
    const SampleSpace s11 = enumerate({1, 1});
    REQUIRE(s11.size() == 4);
    const int expect[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (int p = 0; p < 4; ++p) {
        CHECK(s11.outcome_at(p).s_C == expect[p][0]);
        CHECK(s11.outcome_at(p).s_D == expect[p][1]);
    }

    const SampleSpace s21 = enumerate({2, 1});
    CHECK(s21.index({1, 0}) == 3);

    CHECK(enumerate({10, 10}).size() == 121);
}

TEST_CASE("enumeration round-trips outcome to index to outcome") {
    const SampleSpace space = enumerate({7, 4});
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        CHECK(space.pos(s) == p);
    }
    CHECK_THROWS_AS(space.pos({8, 0}), std::out_of_range);
    CHECK_THROWS_AS(space.outcome_at(space.size()), std::out_of_range);
}

TEST_CASE("successor maps are defined exactly inside the grid") {
    const SampleSpace space = enumerate({3, 2});
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        const int sc = space.succ_C(p);
        const int sd = space.succ_D(p);
        if (s.s_C < 3) {
            REQUIRE(sc >= 0);
            CHECK(space.outcome_at(sc).s_C == s.s_C + 1);
            CHECK(space.outcome_at(sc).s_D == s.s_D);
        } else {
            CHECK(sc == -1);
        }
        if (s.s_D < 2) {
            REQUIRE(sd >= 0);
            CHECK(space.outcome_at(sd).s_D == s.s_D + 1);
        } else {
            CHECK(sd == -1);
        }
    }
}

TEST_CASE("convexity accepts monotone staircases and rejects isolated cells") {
    const SampleSpace space = enumerate({1, 1});
    DecisionVector zeros(space.size()), ones(space.size());
    for (int p = 0; p < space.size(); ++p) ones.set(p, true);
    CHECK(is_convex(space, zeros));
    CHECK(is_convex(space, ones));

    DecisionVector corner(space.size());
    corner.set(space.pos({1, 1}), true);  // requires (0,1) too
    CHECK_FALSE(is_convex(space, corner));
    corner.set(space.pos({0, 1}), true);
    CHECK(is_convex(space, corner));

    DecisionVector wrong_size(3);
    CHECK_THROWS_AS(is_convex(space, wrong_size), std::invalid_argument);
}

TEST_CASE("threshold form round-trips convex regions") {
    std::mt19937 rng(7);
    const SampleSpace space = enumerate({6, 5});
    for (int it = 0; it < 50; ++it) {
        const auto t = testsupport::random_thresholds(rng, 6, 5);
        const DecisionVector d = from_thresholds(space, t);
        REQUIRE(is_convex(space, d));
        const auto back = thresholds_of(space, d);
        REQUIRE(back.has_value());
        CHECK(*back == t);
    }

    DecisionVector nonconvex(space.size());
    nonconvex.set(space.pos({6, 0}), true);
    CHECK_FALSE(thresholds_of(space, nonconvex).has_value());
}

TEST_CASE("rejection rate equals the masked joint mass") {
    const SampleSpace space = enumerate({2, 2});
    DecisionVector all(space.size()), none(space.size());
    for (int p = 0; p < space.size(); ++p) all.set(p, true);
    CHECK_THAT(rejection_rate(space, all, {0.3, 0.8}), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(rejection_rate(space, none, {0.3, 0.8}) == 0.0);

    DecisionVector top(space.size());
    for (int sc = 0; sc <= 2; ++sc) top.set(space.pos({sc, 2}), true);
    CHECK_THAT(rejection_rate(space, top, {0.5, 0.5}), Catch::Matchers::WithinAbs(0.25, 1e-12));
}

TEST_CASE("threshold rejection rate matches the generic path") {
    std::mt19937 rng(11);
    const SampleSpace space = enumerate({5, 7});
    for (int it = 0; it < 20; ++it) {
        const auto t = testsupport::random_thresholds(rng, 5, 7);
        const DecisionVector d = from_thresholds(space, t);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const Theta theta{unif(rng), unif(rng)};
        CHECK_THAT(rejection_rate_thresholds(space, t, theta),
                   Catch::Matchers::WithinAbs(rejection_rate(space, d, theta), 1e-13));
    }
}

TEST_CASE("convex rejection rate is monotone along each axis") {
    std::mt19937 rng(3);
    const SampleSpace space = enumerate({4, 6});
    for (int it = 0; it < 10; ++it) {
        const DecisionVector d = testsupport::random_convex_region(rng, space);
        for (double fixed = 0.0; fixed <= 1.0 + 1e-12; fixed += 0.25) {
            double prev_d = -1.0, prev_c = 2.0;
            for (int k = 0; k <= 100; ++k) {
                const double th = k / 100.0;
                const double along_d = rejection_rate(space, d, {fixed, th});
                const double along_c = rejection_rate(space, d, {th, fixed});
                CHECK(along_d >= prev_d - 1e-12);
                CHECK(along_c <= prev_c + 1e-12);
                prev_d = along_d;
                prev_c = along_c;
            }
        }
    }
}

TEST_CASE("incidence rows apply with at most two nonzeros and drop out-of-range offsets") {
    const SampleSpace space = enumerate({3, 3});
    const IncidenceRows inc = IncidenceRows::build(space);
    for (int p = 0; p < space.size(); ++p) {
        const Outcome s = space.outcome_at(p);
        CHECK((inc.off_C[p] == -1) == (s.s_C == 3));
        CHECK((inc.off_D[p] == -1) == (s.s_D == 0));
    }

    std::mt19937 rng(19);
    std::bernoulli_distribution coin(0.4);
    for (int it = 0; it < 30; ++it) {
        DecisionVector d(space.size());
        for (int p = 0; p < space.size(); ++p) d.set(p, coin(rng));
        for (int p = 0; p < space.size(); ++p) {
            const int ac = inc.apply_C(d, p);
            const int ad = inc.apply_D(d, p);
            CHECK((ac >= -1 && ac <= 1));
            CHECK((ad >= -1 && ad <= 1));
        }
    }
    for (int it = 0; it < 30; ++it) {
        const DecisionVector d = testsupport::random_convex_region(rng, space);
        for (int p = 0; p < space.size(); ++p) {
            CHECK(inc.apply_C(d, p) >= 0);
            CHECK(inc.apply_D(d, p) >= 0);
        }
    }
}

TEST_CASE("region CSV round-trips and validates its header") {
    std::mt19937 rng(23);
    const SampleSpace space = enumerate({4, 3});
    const DecisionVector d = testsupport::random_convex_region(rng, space);

    std::stringstream buf;
    write_region_csv(space, d, buf);
    const std::string text = buf.str();
    CHECK(text.rfind("s_C,s_D,reject\n", 0) == 0);

    std::stringstream in(text);
    CHECK(read_region_csv(space, in) == d);

    std::stringstream bad("nope\n0,0,1\n");
    CHECK_THROWS(read_region_csv(space, bad));
}

TEST_CASE("masked sum and lexicographic order behave") {
    const SampleSpace space = enumerate({2, 2});
    std::vector<double> coeffs(space.size());
    for (int p = 0; p < space.size(); ++p) coeffs[p] = p + 1.0;

    DecisionVector d(space.size());
    d.set(0, true);
    d.set(4, true);
    CHECK_THAT(masked_sum(coeffs, d), Catch::Matchers::WithinAbs(6.0, 1e-15));

    DecisionVector zeros(space.size());
    CHECK(zeros.lex_less(d));
    CHECK_FALSE(d.lex_less(zeros));
    CHECK_FALSE(zeros.lex_less(zeros));

    // First differing position decides: e is 0 where d is 1 at position 0.
    DecisionVector e(space.size());
    e.set(1, true);
    CHECK(e.lex_less(d));
    CHECK_FALSE(d.lex_less(e));
}
