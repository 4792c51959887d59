#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <si/rng.hpp>
#include <si/stats.hpp>

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("streams are reproducible and separated by label", "[rng]") {
    si::rng::Stream a(42, "factors/V"), b(42, "factors/V"), c(42, "factors/U"), d(43, "factors/V");
    bool differs_label = false, differs_seed = false;
    for (int i = 0; i < 64; ++i) {
        const auto x = a.next_u64();
        REQUIRE(x == b.next_u64());
        differs_label |= x != c.next_u64();
        differs_seed |= x != d.next_u64();
    }
    CHECK(differs_label);
    CHECK(differs_seed);

    // Replicate and sub-index keys are distinct too.
    CHECK(si::rng::derive_key(1, "noise", 0, 0) != si::rng::derive_key(1, "noise", 1, 0));
    CHECK(si::rng::derive_key(1, "noise", 0, 1) != si::rng::derive_key(1, "noise", 1, 0));
}

TEST_CASE("uniform and bounded draws stay in range", "[rng]") {
    si::rng::Stream s(7, "u");
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(s.below(13) < 13u);
    }
    CHECK(s.below(1) == 0u);
}

TEST_CASE("normal draws have unit moments", "[rng]") {
    si::rng::Stream s(11, "n");
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
    CHECK_THAT(sq / n - mean * mean, WithinAbs(1.0, 0.02));
}

TEST_CASE("normal quantile", "[stats]") {
    CHECK_THAT(si::stats::normal_quantile(0.975), WithinAbs(1.959963984540054, 1e-12));
    CHECK_THAT(si::stats::normal_quantile(0.5), WithinAbs(0.0, 1e-15));
    CHECK_THAT(si::stats::normal_quantile(0.025), WithinAbs(-1.959963984540054, 1e-12));
    CHECK_THAT(si::stats::normal_quantile(1e-10), WithinAbs(-6.361340902404056, 1e-9));
    for (double p : {1e-6, 0.01, 0.2, 0.7, 0.99, 1 - 1e-6})
        CHECK_THAT(si::stats::normal_cdf(si::stats::normal_quantile(p)), WithinRel(p, 1e-9));
    // The rounded textbook constant agrees to three decimals.
    CHECK(std::abs(si::stats::normal_quantile(0.975) - 1.96) < 5e-4);
    CHECK_THROWS_AS(si::stats::normal_quantile(0.0), si::InputError);
    CHECK_THROWS_AS(si::stats::normal_quantile(1.0), si::InputError);
}

TEST_CASE("sample summaries", "[stats]") {
    const std::vector<double> xs{3.0, 1.0, 2.0, 10.0};
    CHECK(si::stats::mean(xs) == 4.0);
    CHECK(si::stats::median(xs) == 2.5);
    CHECK_THAT(si::stats::variance(xs), WithinRel(50.0 / 3.0, 1e-15));
    CHECK(si::stats::variance(std::vector<double>{5.0}) == 0.0);
    CHECK(si::stats::mean_abs(std::vector<double>{-1.0, 3.0}) == 2.0);
    CHECK_THROWS_AS(si::stats::mean(std::vector<double>{}), si::InputError);

    const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
    CHECK_THAT(si::stats::ols_slope(x, y), WithinAbs(2.0, 1e-14));

    const auto m = si::stats::median3(std::vector<double>{5, 1, 4, 2, 3});
    CHECK(m == std::vector<double>{3, 4, 2, 3, 2.5});
}

TEST_CASE("ks distance against the normal law", "[stats]") {
    // One point at the median: the empirical CDF jumps from 0 to 1 where F = 1/2.
    CHECK_THAT(si::stats::ks_distance_normal(std::vector<double>{0.0}), WithinAbs(0.5, 1e-15));
    si::rng::Stream s(3, "ks");
    std::vector<double> z(20000);
    for (auto& v : z) v = s.normal();
    CHECK(si::stats::ks_distance_normal(z) < 0.015);
    std::vector<double> shifted = z;
    for (auto& v : shifted) v += 0.5;
    CHECK(si::stats::ks_distance_normal(shifted) > 0.15);
}
