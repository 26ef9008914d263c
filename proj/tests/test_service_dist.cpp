#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "binbatch/service_dist.hpp"

using namespace binbatch;
using Catch::Approx;

TEST_CASE("distribution constructors enforce invariants") {
    REQUIRE_NOTHROW(make_uniform(1.0, 20.0));
    REQUIRE_NOTHROW(make_uniform(0.0, 1.0));
    REQUIRE_THROWS_AS(make_uniform(-1.0, 2.0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_uniform(5.0, 5.0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_uniform(6.0, 5.0), std::invalid_argument);

    REQUIRE_NOTHROW(make_exponential(0.1));
    REQUIRE_THROWS_AS(make_exponential(0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(make_exponential(-2.0), std::invalid_argument);

    REQUIRE_NOTHROW(make_empirical({3.0, 1.0, 2.0}));
    REQUIRE_THROWS_AS(make_empirical({}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_empirical({1.0, 0.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_empirical({1.0, -4.0}), std::invalid_argument);

    const auto emp = make_empirical({3.0, 1.0, 2.0});
    const auto& samples = std::get<Empirical>(emp).samples;
    REQUIRE(std::is_sorted(samples.begin(), samples.end()));
}

TEST_CASE("mean of each distribution family") {
    CHECK(mean(make_uniform(1.0, 20.0)) == Approx(10.5));
    CHECK(mean(make_exponential(0.1)) == Approx(10.0));
    CHECK(mean(make_empirical({2.0, 4.0, 6.0})) == Approx(4.0));
}

TEST_CASE("expected maximum of uniform draws") {
    CHECK(expected_max_uniform(1, 0.0, 1.0) == Approx(0.5));
    CHECK(expected_max_uniform(2, 0.0, 1.0) == Approx(2.0 / 3.0));
    CHECK(expected_max_uniform(128, 1.0, 20.0) == Approx(2561.0 / 129.0).epsilon(1e-12));
    REQUIRE_THROWS_AS(expected_max_uniform(0, 0.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(expected_max_uniform(3, 2.0, 2.0), std::invalid_argument);
}

TEST_CASE("expected maximum is increasing in count and below the top") {
    double prev = 0.0;
    for (std::size_t b = 1; b <= 1000; ++b) {
        const double v = expected_max_uniform(b, 1.0, 20.0);
        CHECK(v > prev);
        CHECK(v >= 10.5);
        CHECK(v < 20.0);
        prev = v;
    }
}

TEST_CASE("expected maximum matches Monte Carlo estimates within 3 sigma") {
    RandomStream rng(20240101);
    for (const std::size_t b : {std::size_t{1}, std::size_t{2}, std::size_t{8}, std::size_t{128}}) {
        const std::size_t trials = 100000;
        double sum = 0, sum_sq = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            double max_draw = 0;
            for (std::size_t j = 0; j < b; ++j) max_draw = std::max(max_draw, rng.uniform(1.0, 20.0));
            sum += max_draw;
            sum_sq += max_draw * max_draw;
        }
        const double mc_mean = sum / trials;
        const double mc_var = (sum_sq - trials * mc_mean * mc_mean) / (trials - 1);
        const double se = std::sqrt(mc_var / trials);
        CHECK(std::abs(mc_mean - expected_max_uniform(b, 1.0, 20.0)) < 3.0 * se);
    }
}

TEST_CASE("harmonic numbers by direct summation") {
    CHECK(harmonic_number(1) == Approx(1.0));
    CHECK(harmonic_number(4) == Approx(25.0 / 12.0).epsilon(1e-12));
    // asymptotic cross-check: H_n ~ ln n + gamma + 1/(2n)
    const double gamma = 0.5772156649015329;
    CHECK(harmonic_number(200) == Approx(std::log(200.0) + gamma + 1.0 / 400.0).margin(1e-5));
    CHECK(harmonic_number(200) == Approx(5.878030948121446).epsilon(1e-12));
    REQUIRE_THROWS_AS(harmonic_number(0), std::invalid_argument);
}

TEST_CASE("harmonic minus log is decreasing and bounded") {
    double prev = 1.0;
    for (std::size_t n = 1; n <= 2000; ++n) {
        const double gap = harmonic_number(n) - std::log(static_cast<double>(n));
        CHECK(gap > 0.5);
        CHECK(gap <= 1.0);
        if (n > 1) CHECK(gap < prev);
        prev = gap;
    }
}

TEST_CASE("samples stay inside the support") {
    RandomStream rng(7);
    const auto uni = make_uniform(1.0, 20.0);
    const auto exp = make_exponential(0.1);
    const auto emp = make_empirical({2.0, 4.0, 6.0});
    for (int i = 0; i < 10000; ++i) {
        const double u = sample(uni, rng);
        CHECK(u >= 1.0);
        CHECK(u < 20.0);
        CHECK(sample(exp, rng) >= 0.0);
        const double e = sample(emp, rng);
        CHECK((e == 2.0 || e == 4.0 || e == 6.0));
    }
}

TEST_CASE("streams with equal seeds draw identical values") {
    const auto dist = make_uniform(1.0, 20.0);
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(sample(dist, a) == sample(dist, b));

    RandomStream c = RandomStream::derive(99, 1);
    RandomStream d = RandomStream::derive(99, 1);
    RandomStream e = RandomStream::derive(99, 2);
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double x = c.uniform01();
        CHECK(x == d.uniform01());
        any_diff = any_diff || x != e.uniform01();
    }
    CHECK(any_diff);
}

TEST_CASE("sample means converge to the distribution mean") {
    const std::size_t n = 1000000;
    struct Case {
        ServiceDist dist;
        double sigma;
    };
    const std::vector<Case> cases{
        {make_uniform(1.0, 20.0), 19.0 / std::sqrt(12.0)},
        {make_exponential(0.1), 10.0},
        {make_empirical({2.0, 4.0, 6.0}), std::sqrt(8.0 / 3.0)},
    };
    std::uint64_t seed = 1000;
    for (const Case& c : cases) {
        RandomStream rng(seed++);
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += sample(c.dist, rng);
        const double se = c.sigma / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(sum / n - mean(c.dist)) < 3.0 * se);
    }
}
