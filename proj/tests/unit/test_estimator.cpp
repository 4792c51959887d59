#include <catch_amalgamated.hpp>

#include <si/estimator.hpp>
#include <si/synthgen.hpp>

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

si::DonorView view_of(const si::Matrix& pre, const si::Matrix& post) {
    si::DonorView v;
    v.pre = pre;
    v.post = post;
    for (si::Index j = 0; j < pre.cols(); ++j) v.donor_indices.push_back(j);
    return v;
}

si::WeightModel model_of(const si::Vector& w) {
    si::WeightModel m;
    m.weights = w;
    m.l2_norm = w.norm();
    m.l1_norm = w.lpNorm<1>();
    return m;
}

}  // namespace

TEST_CASE("theta estimate is the post mean of the synthetic unit", "[estimator]") {
    si::Matrix post(4, 3);
    post << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    const auto v = view_of(si::Matrix::Identity(3, 3), post);
    CHECK(si::estimate_theta(model_of(si::Vector::Unit(3, 2)), v) == 7.5);
    CHECK(si::estimate_theta(model_of(si::Vector::Zero(3)), v) == 0.0);
    CHECK_THROWS_AS(si::estimate_theta(si::Vector::Zero(2), post), si::InputError);
    CHECK_THROWS_AS(si::estimate_theta(si::Vector::Zero(3), si::Matrix(0, 3)), si::InputError);

    // Linear in the post matrix.
    const si::Vector w(si::Vector::LinSpaced(3, 0.5, -1.25));
    const si::Matrix p2 = post.array().square();
    const double lhs = si::estimate_theta(w, 2.0 * post - 3.0 * p2);
    const double rhs = 2.0 * si::estimate_theta(w, post) - 3.0 * si::estimate_theta(w, p2);
    CHECK_THAT(lhs, WithinAbs(rhs, 1e-12));
}

TEST_CASE("noiseless consistency design recovers theta", "[estimator]") {
    auto spec = si::ScenarioSpec::consistency_defaults(4);
    spec.sigma2 = 0.0;
    const auto truth = si::gen_consistency(spec);
    const auto obs = si::observe(truth, 0.0, spec.seed, 0);
    CHECK(obs.donors_pre == truth.expected_pre);
    const auto m = si::fit_weights(obs.target_pre, si::decompose(obs.donors_pre), truth.rank_pre);
    const double theta_hat = si::estimate_theta(m.weights, obs.donors_post[0]);
    CHECK(std::abs(theta_hat - truth.theta[0]) <= 1e-8 * (1.0 + std::abs(truth.theta[0])));
    const auto v = view_of(obs.donors_pre, obs.donors_post[0]);
    CHECK(si::estimate_noise_variance(m, obs.target_pre, v) <= 1e-12);
}

TEST_CASE("noise variance is non-negative", "[estimator]") {
    si::Matrix pre(6, 3);
    si::rng::Stream s(1, "var");
    si::rng::fill_normal(pre, s);
    const si::Vector target = pre.col(1) + 2.5 * si::Vector::Ones(6);
    const auto v = view_of(pre, si::Matrix::Zero(1, 3));
    for (si::Index k = 1; k <= 3; ++k)
        CHECK(si::estimate_noise_variance(si::fit_weights(target, v, k), target, v) >= 0.0);
}

TEST_CASE("noise variance at the normality-design scale", "[estimator][slow]") {
    // Simplex donor weights: with standard-normal weights the residual also
    // carries the donors' noise through ||w||, see the README.
    auto spec = si::ScenarioSpec::normality_defaults(31);
    spec.t1 = 1;
    spec.weight_law = si::WeightLaw::simplex;
    const auto truth = si::gen_normality_dual(spec);
    std::vector<double> s2;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        const auto obs = si::observe(truth, spec.sigma2, spec.seed, rep);
        const auto m = si::fit_weights(obs.target_pre, si::decompose(obs.donors_pre), truth.rank);
        s2.push_back(si::estimate_noise_variance(m, obs.target_pre, view_of(obs.donors_pre, obs.donors_post[0])));
    }
    const double med = si::stats::median(s2);
    CHECK(med >= 0.4);
    CHECK(med <= 0.6);
}

TEST_CASE("confidence interval", "[estimator]") {
    auto [lo, hi] = si::confidence_interval(3.0, 0.0, 2.0, 10, 0.05);
    CHECK(lo == 3.0);
    CHECK(hi == 3.0);
    std::tie(lo, hi) = si::confidence_interval(0.0, 1.0, 1.0, 4, 0.05);
    CHECK_THAT(hi, WithinAbs(0.97998, 5e-6));
    CHECK_THAT(lo, WithinAbs(-0.97998, 5e-6));
    CHECK_THAT(hi, WithinAbs(si::stats::normal_quantile(0.975) / 2.0, 1e-15));
    std::tie(lo, hi) = si::confidence_interval(1.5, 0.7, 3.2, 17, 0.1);
    CHECK_THAT(hi - 1.5, WithinAbs(si::stats::normal_quantile(0.95) * std::sqrt(0.7) * 3.2 / std::sqrt(17.0), 1e-12));
    CHECK(lo <= 1.5);
    CHECK_THROWS_WITH(si::confidence_interval(0, 1, 1, 4, 0.0), Catch::Matchers::ContainsSubstring("invalid alpha"));
    CHECK_THROWS_AS(si::confidence_interval(0, 1, 1, 4, 1.0), si::InputError);
}

TEST_CASE("confidence intervals cover theta under the normality design", "[estimator][slow]") {
    const auto spec = si::ScenarioSpec::normality_defaults(12);
    const auto truth = si::gen_normality_dual(spec);
    int covered = 0;
    const int reps = 1000;
    for (std::uint64_t rep = 0; rep < static_cast<std::uint64_t>(reps); ++rep) {
        const auto obs = si::observe(truth, spec.sigma2, spec.seed, rep);
        const auto dec = si::decompose(obs.donors_pre);
        const auto est = si::estimate_pair(obs.target_pre, view_of(obs.donors_pre, obs.donors_post[0]), dec,
                                           truth.rank, 0.05);
        REQUIRE(est.ci_low <= est.theta_hat);
        REQUIRE(est.theta_hat <= est.ci_high);
        covered += est.ci_low <= truth.theta[0] && truth.theta[0] <= est.ci_high;
    }
    CHECK(covered >= 900);
}

TEST_CASE("estimate_all", "[estimator]") {
    SECTION("single intervention: control estimates only") {
        si::Matrix y(6, 3);
        si::rng::Stream s(2, "d1");
        si::rng::fill_normal(y, s);
        si::ObservedPanel p(y, 4, {0, 0, 0}, 1);
        si::EstimateOptions opt;
        opt.rank = si::RankPolicy::fixed(1);
        const auto t = si::estimate_all(p, opt);
        REQUIRE(t.rows.size() == 3);
        for (const auto& r : t.rows) {
            CHECK(r.intervention == 0);
            CHECK(r.observed);
            CHECK(r.estimate.has_value());
            CHECK(r.donors.size() == 2);
            CHECK(r.observed_post_mean.has_value());
        }
    }
    SECTION("dual design: two estimates per target from one weight vector") {
        si::ScenarioSpec spec{60, 5, 30, 4, 4, 0.2, si::Scenario::normality_dual, 9, {}, si::WeightLaw::standard_normal};
        const auto panel = si::simulated_panel(si::gen_normality_dual(spec), spec.sigma2, spec.seed);
        si::EstimateOptions opt;
        opt.rank = si::RankPolicy::fixed(4);
        opt.targets = {panel.num_units() - 1};
        const auto t = si::estimate_all(panel, opt);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0].estimate.has_value());
        CHECK(t.rows[1].estimate.has_value());
        CHECK((t.rows[0].weights - t.rows[1].weights).norm() <= 1e-10 * t.rows[0].weights.norm());
        CHECK(t.rows[0].estimate->theta_hat != t.rows[1].estimate->theta_hat);
    }
    SECTION("batch equals per-pair recomputation") {
        si::Matrix y(7, 9);
        si::rng::Stream s(4, "toy");
        si::rng::fill_normal(y, s);
        si::ObservedPanel p(y, 5, {0, 1, 1, 0, 1, 0, 1, 0, 1}, 2);
        si::EstimateOptions opt;
        opt.rank = si::RankPolicy::fixed(2);
        opt.run_test = true;
        opt.test_rank = si::RankPolicy::fixed(1);
        const auto t = si::estimate_all(p, opt);
        REQUIRE(t.rows.size() == 18);
        for (const auto& r : t.rows) {
            const auto donors = r.observed ? si::donor_view_excluding(p, r.intervention, r.unit)
                                           : si::donor_view(p, r.intervention);
            const auto m = si::fit_weights(p.pre_column(r.unit), donors, 2);
            REQUIRE(r.estimate.has_value());
            CHECK(r.weights == m.weights);
            CHECK(r.estimate->theta_hat == si::estimate_theta(m, donors));
            CHECK(r.estimate->sigma2_hat == si::estimate_noise_variance(m, p.pre_column(r.unit), donors));
            REQUIRE(r.test.has_value());
            const auto direct = si::run_test(si::decompose(donors.pre), si::decompose(donors.post), 0.05,
                                             std::sqrt(r.estimate->sigma2_hat), si::kGaussianC,
                                             si::RankPolicy::fixed(1), si::RankPolicy::fixed(1));
            CHECK(r.test->tau_hat == direct.tau_hat);
            CHECK(r.test->reject == direct.reject);
        }
        // Parallel execution gives the same table.
        opt.jobs = 3;
        const auto t3 = si::estimate_all(p, opt);
        for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(t3.rows[i].estimate->theta_hat == t.rows[i].estimate->theta_hat);
    }
    SECTION("groups without members are skipped; singleton groups report the observed mean") {
        si::Matrix y = si::Matrix::Random(6, 3);
        si::ObservedPanel p(y, 3, {0, 0, 2}, 3);
        const auto t = si::estimate_all(p, {});
        CHECK(t.skipped_interventions == std::vector<int>{1});
        for (const auto& r : t.rows) {
            CHECK(r.intervention != 1);
            if (r.unit == 2 && r.intervention == 2) {
                CHECK_FALSE(r.estimate.has_value());
                CHECK(r.observed_post_mean.has_value());
            }
        }
    }
}

TEST_CASE("pooled sigma for a donor group", "[estimator]") {
    si::Matrix y(8, 4);
    si::rng::Stream s(6, "pool");
    si::rng::fill_normal(y, s);
    si::ObservedPanel p(y, 5, {0, 1, 1, 1}, 2);
    const auto policy = si::RankPolicy::fixed(2);
    const auto g = si::donor_view(p, 1);
    const auto m = si::fit_weights(p.pre_column(0), g, 2);
    CHECK_THAT(si::pooled_sigma_hat(p, 1, policy),
               WithinRel(std::sqrt(si::estimate_noise_variance(m, p.pre_column(0), g)), 1e-14));
}
