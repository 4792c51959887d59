#include <catch_amalgamated.hpp>

#include <si/harness.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

si::ScenarioSpec small_consistency(std::uint64_t seed) {
    return {40, 40, 40, 6, 3, 0.3, si::Scenario::consistency, seed, si::ScenarioSpec::tenths(),
            si::WeightLaw::standard_normal};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("consistency summary is recomputable from per-replicate errors", "[harness]") {
    const auto spec = small_consistency(3);
    const auto rep = si::run_consistency(spec, 12, 2);
    for (const std::string name : {"inclusion", "violating"}) {
        const auto err = rep.per_replicate[name].get<std::vector<std::vector<double>>>();
        REQUIRE(err.size() == 12);
        for (std::size_t j = 0; j < spec.rho_grid.size(); ++j) {
            double total = 0.0;
            for (const auto& e : err) total += std::abs(e[j]);
            CHECK_THAT(rep.summary[name]["mae"][j].get<double>(), WithinAbs(total / 12.0, 1e-12));
        }
    }
    const double ratio = rep.summary["violating"]["mae"].back().get<double>() /
                         rep.summary["inclusion"]["mae"].back().get<double>();
    CHECK_THAT(rep.summary["ratio_at_max_rho"].get<double>(), WithinRel(ratio, 1e-12));
}

TEST_CASE("noiseless consistency recovers the inclusion mean", "[harness]") {
    auto spec = small_consistency(4);
    spec.sigma2 = 0.0;
    const auto rep = si::run_consistency(spec, 2);
    for (const auto& m : rep.summary["inclusion"]["mae"]) CHECK(m.get<double>() <= 1e-8);
}

TEST_CASE("a single replicate gives a well-formed report", "[harness]") {
    const auto rep = si::run_consistency(small_consistency(5), 1);
    CHECK(rep.replicates == 1);
    CHECK(rep.summary["inclusion"]["mae"].size() == 10);
    si::ScenarioSpec n{60, 10, 60, 4, 4, 0.5, si::Scenario::normality_dual, 5, {}, si::WeightLaw::standard_normal};
    const auto d = si::run_normality(n, 1);
    CHECK(d.per_replicate["d0_normal"].size() == 1);
    CHECK(std::isfinite(d.summary["d0_normal"]["mean"].get<double>()));
    CHECK_THROWS_AS(si::run_consistency(small_consistency(5), 0), si::InputError);
}

TEST_CASE("distribution summary matches a direct recomputation", "[harness]") {
    si::ScenarioSpec n{80, 10, 80, 4, 4, 0.5, si::Scenario::normality_dual, 8, {}, si::WeightLaw::standard_normal};
    const auto rep = si::run_normality(n, 40, 2);
    const auto est = rep.per_replicate["d1_uniform"].get<std::vector<double>>();
    const auto& s = rep.summary["d1_uniform"];
    double mean = 0.0;
    for (double x : est) mean += x / 40.0;
    double var = 0.0;
    for (double x : est) var += (x - mean) * (x - mean) / 39.0;
    CHECK_THAT(s["mean"].get<double>(), WithinAbs(mean, 1e-12));
    CHECK_THAT(s["empirical_var"].get<double>(), WithinRel(var, 1e-10));
    CHECK_THAT(s["mc_se"].get<double>(), WithinRel(std::sqrt(var / 40.0), 1e-10));
    const double theory = 0.5 * std::pow(rep.summary["w_tilde_l2"].get<double>(), 2) / 10.0;
    CHECK_THAT(s["theoretical_var"].get<double>(), WithinRel(theory, 1e-12));
    CHECK_FALSE(s["bias_flag"].get<bool>());
}

TEST_CASE("bias design trips the bias flag", "[harness]") {
    si::ScenarioSpec b{100, 20, 100, 8, 5, 0.5, si::Scenario::bias, 2, {}, si::WeightLaw::standard_normal};
    const auto rep = si::run_bias(b, 60);
    CHECK(rep.summary["violating"]["bias_flag"].get<bool>());
}

TEST_CASE("reports do not depend on the worker count", "[harness]") {
    const auto a = si::report_json(si::run_consistency(small_consistency(9), 8, 1)).dump();
    const auto b = si::report_json(si::run_consistency(small_consistency(9), 8, 3)).dump();
    CHECK(a == b);
    si::AbSpec ab;
    ab.seed = 4;
    CHECK(si::report_json(si::run_ab_study(ab, 5, 1)).dump() == si::report_json(si::run_ab_study(ab, 5, 2)).dump());
}

TEST_CASE("write_report lays out its files", "[harness]") {
    const auto dir = std::filesystem::temp_directory_path() / "si_harness_report";
    std::filesystem::remove_all(dir);
    const auto rep = si::run_consistency(small_consistency(1), 3);
    si::write_report(rep, dir);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "timing.json"));
    CHECK(std::filesystem::exists(dir / "mae_vs_rho.csv"));
    const auto parsed = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(parsed["scenario"] == "consistency");
    CHECK_FALSE(parsed.contains("runtime_seconds"));
    const auto csv = slurp(dir / "mae_vs_rho.csv");
    CHECK(csv.rfind("rho,rows,mae_inclusion,mae_violating", 0) == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("SE metric", "[harness]") {
    CHECK_THAT(*si::se_metric(2.0, 2.0, 1.0), WithinAbs(1.0, 1e-15));
    CHECK_THAT(*si::se_metric(2.0, 1.0, 1.0), WithinAbs(0.0, 1e-15));
    CHECK_THAT(*si::se_metric(2.0, 0.0, 1.0), WithinAbs(-3.0, 1e-15));
    CHECK_FALSE(si::se_metric(1.5, 1.0, 1.5).has_value());
}

TEST_CASE("A/B study", "[harness]") {
    si::AbSpec spec;
    spec.seed = 12;
    const auto rep = si::run_ab_study(spec, 1);
    for (const std::string key : {"d1", "d2", "d3"}) {
        CHECK(rep.summary.contains(key));
        CHECK(rep.per_replicate[key].size() == 1);
    }
    CHECK(si::report_json(rep).dump() == si::report_json(si::run_ab_study(spec, 1)).dump());

    // Identical units: the donor-group mean is already the answer, so the
    // synthetic estimate cannot improve on it and the SE metric is not positive.
    si::AbSpec flat = spec;
    flat.heterogeneity = 0.0;
    const auto homogeneous = si::run_ab_study(flat, 10);
    for (const std::string key : {"d1", "d2", "d3"}) CHECK(homogeneous.summary[key]["median_se"].get<double>() < 0.0);
    const auto heterogeneous = si::run_ab_study(spec, 10);
    for (const std::string key : {"d1", "d2", "d3"}) CHECK(heterogeneous.summary[key]["median_se"].get<double>() > 0.5);
}

TEST_CASE("elbow and band studies", "[harness]") {
    const auto e = si::run_elbow(60, 5, {0.0, 0.1, 0.4}, 3);
    CHECK(e.summary["elbow_rank"].size() == 3);
    for (const auto& g : e.summary["gap_ratio"]) CHECK((g.is_null() || g.get<double>() > 2.0));
    const auto b = si::run_band_study(40, 30, 4, 1.0, 3.0, 1.0, 20, 7);
    CHECK_THAT(b.summary["band"].get<double>(), WithinRel(si::singular_value_band(40, 30, 1.0, 3.0, 1.0), 1e-15));
    CHECK(b.summary["fraction_within"].get<double>() >= 0.9);
}
