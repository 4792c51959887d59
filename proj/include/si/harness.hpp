#pragma once

// Monte Carlo studies over the synthetic designs. Each study keeps the
// expectations fixed, resamples the shocks per replicate, and stores every
// per-replicate number so the summary can be recomputed from the report.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "parallel.hpp"
#include "pcr.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "stats.hpp"
#include "subspace_test.hpp"
#include "synthgen.hpp"
#include "types.hpp"

namespace si {

/// Plot-ready numeric table, written as <name>.csv.
struct CurveTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
    std::string scenario;
    std::uint64_t seed = 0;
    Index replicates = 0;
    nlohmann::json config;
    nlohmann::json summary;
    nlohmann::json per_replicate;
    std::vector<CurveTable> curves;
    double runtime_seconds = 0.0;  // kept out of report.json so reruns compare byte-for-byte
};

/// Serialized report without wall-clock fields.
inline nlohmann::json report_json(const ExperimentReport& r) {
    return {{"scenario", r.scenario},
            {"seed", r.seed},
            {"replicates", r.replicates},
            {"config", r.config},
            {"summary", r.summary},
            {"per_replicate", r.per_replicate}};
}

/// Writes report.json, one CSV per curve and timing.json into `dir`.
inline void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory: " + dir.string());
    {
        std::ofstream out(dir / "report.json");
        if (!out) throw InputError("cannot write " + (dir / "report.json").string());
        out << report_json(r).dump(2) << '\n';
    }
    for (const auto& c : r.curves) {
        std::vector<csv::Row> rows{c.columns};
        for (const auto& values : c.rows) {
            csv::Row row;
            for (double v : values) row.push_back(csv::format_double(v));
            rows.push_back(std::move(row));
        }
        csv::write_rows(dir / (c.name + ".csv"), rows);
    }
    std::ofstream timing(dir / "timing.json");
    timing << nlohmann::json{{"runtime_seconds", r.runtime_seconds}}.dump(2) << '\n';
}

namespace detail {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Histogram of standardized values on [-4, 4] next to the standard normal density.
inline CurveTable standardized_histogram(const std::string& name, const std::vector<double>& z, int bins = 40) {
    CurveTable t{name, {"bin_center", "density", "normal_pdf"}, {}};
    const double lo = -4.0, width = 8.0 / bins;
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (double x : z) {
        const auto b = static_cast<long>(std::floor((x - lo) / width));
        if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)] += 1.0;
    }
    for (int b = 0; b < bins; ++b) {
        const double c = lo + (b + 0.5) * width;
        const double density = z.empty() ? 0.0 : counts[static_cast<std::size_t>(b)] / (z.size() * width);
        t.rows.push_back({c, density, std::exp(-0.5 * c * c) / std::sqrt(2.0 * std::numbers::pi)});
    }
    return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Consistency: error of the post-period mean estimate as a function of the
// fraction rho of post periods used.

/// Summary of signed per-replicate errors err[regime][replicate][rho index].
inline nlohmann::json summarize_consistency(const std::vector<double>& rho_grid, Index t1,
                                            const std::vector<std::vector<std::vector<double>>>& err,
                                            const std::vector<std::string>& regimes) {
    nlohmann::json s;
    std::vector<double> log_rows;
    for (double rho : rho_grid) log_rows.push_back(std::log(static_cast<double>(prefix_rows(rho, t1))));
    s["rho"] = rho_grid;
    for (std::size_t g = 0; g < regimes.size(); ++g) {
        std::vector<double> mae;
        for (std::size_t j = 0; j < rho_grid.size(); ++j) {
            std::vector<double> col;
            for (const auto& rep : err[g]) col.push_back(rep[j]);
            mae.push_back(stats::mean_abs(col));
        }
        std::vector<double> log_mae;
        for (double m : mae) log_mae.push_back(std::log(m));
        const auto smooth = stats::median3(mae);
        bool decreasing = true;
        for (std::size_t j = 1; j < smooth.size(); ++j) decreasing = decreasing && smooth[j] < smooth[j - 1];
        nlohmann::json r;
        r["mae"] = mae;
        r["mae_median3"] = smooth;
        r["strictly_decreasing_median3"] = decreasing;
        r["loglog_slope"] = rho_grid.size() >= 2 && mae.front() > 0.0 ? nlohmann::json(stats::ols_slope(log_rows, log_mae))
                                                                       : nlohmann::json(nullptr);
        s[regimes[g]] = r;
    }
    if (regimes.size() >= 2) {
        const double a = s[regimes[0]]["mae"].back().get<double>();
        const double b = s[regimes[1]]["mae"].back().get<double>();
        s["ratio_at_max_rho"] = a > 0.0 ? nlohmann::json(b / a) : nlohmann::json(nullptr);
    }
    return s;
}

/// Fixed k defaults to the pre-period rank of the design. Noise is drawn once
/// for the full post period per replicate; each rho uses the leading rows, so
/// the curves share random numbers across rho.
inline ExperimentReport run_consistency(const ScenarioSpec& spec, Index replicates, int jobs = 1, Index k = 0) {
    detail::require(replicates >= 1, "replicates must be >= 1");
    detail::Stopwatch clock;
    ScenarioSpec s = spec;
    if (s.rho_grid.empty()) s.rho_grid = ScenarioSpec::tenths();
    detail::require(std::is_sorted(s.rho_grid.begin(), s.rho_grid.end()), "rho grid must be increasing");
    const GroundTruth truth = gen_consistency(s);
    if (k == 0) k = truth.rank_pre;

    const std::size_t regimes = truth.expected_post.size();
    std::vector<std::vector<double>> theta(regimes);
    for (std::size_t g = 0; g < regimes; ++g)
        for (double rho : s.rho_grid) theta[g].push_back(truth.theta_prefix(g, prefix_rows(rho, s.t1)));

    std::vector<std::vector<std::vector<double>>> err(regimes, std::vector<std::vector<double>>(
                                                                   static_cast<std::size_t>(replicates)));
    parallel_for(replicates, jobs, [&](Index i) {
        const auto obs = observe(truth, s.sigma2, s.seed, static_cast<std::uint64_t>(i));
        const auto model = fit_weights(obs.target_pre, decompose(obs.donors_pre), k);
        for (std::size_t g = 0; g < regimes; ++g) {
            const Vector path = obs.donors_post[g] * model.weights;
            double running = 0.0;
            Index used = 0;
            auto& out = err[g][static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < s.rho_grid.size(); ++j) {
                const Index rows = prefix_rows(s.rho_grid[j], s.t1);
                for (; used < rows; ++used) running += path(used);
                out.push_back(running / static_cast<double>(rows) - theta[g][j]);
            }
        }
    });

    ExperimentReport rep;
    rep.scenario = "consistency";
    rep.seed = s.seed;
    rep.replicates = replicates;
    rep.config = to_json(s);
    rep.config["k"] = k;
    rep.config["noise_across_rho"] = "shared full-length draw, prefixes per rho";
    rep.config["prefix_rule"] = "floor(rho * T1)";
    rep.summary = summarize_consistency(s.rho_grid, s.t1, err, truth.regime_names);
    rep.summary["theta"] = nlohmann::json::object();
    for (std::size_t g = 0; g < regimes; ++g) {
        rep.summary["theta"][truth.regime_names[g]] = theta[g];
        rep.per_replicate[truth.regime_names[g]] = err[g];
    }
    CurveTable curve{"mae_vs_rho", {"rho", "rows"}, {}};
    for (const auto& name : truth.regime_names) curve.columns.push_back("mae_" + name);
    for (std::size_t j = 0; j < s.rho_grid.size(); ++j) {
        std::vector<double> row{s.rho_grid[j], static_cast<double>(prefix_rows(s.rho_grid[j], s.t1))};
        for (const auto& name : truth.regime_names) row.push_back(rep.summary[name]["mae"][j].get<double>());
        curve.rows.push_back(std::move(row));
    }
    rep.curves.push_back(std::move(curve));
    rep.runtime_seconds = clock.seconds();
    return rep;
}

// ---------------------------------------------------------------------------
// Sampling distribution of the estimate against the asymptotic normal law
// N(theta, sigma^2 ||w_tilde||^2 / T1).

struct DistributionSummary {
    double theta = 0.0;
    double mean = 0.0;
    double bias = 0.0;          // |mean - theta|
    double mc_se = 0.0;         // empirical sd / sqrt(n)
    double mean_bound = 0.0;    // 3 sigma ||w_tilde|| / sqrt(T1 n)
    double theoretical_var = 0.0;
    double empirical_var = 0.0;
    double var_ratio = 0.0;
    double ks = 0.0;            // standardized with the theoretical law
    double ci_coverage = 0.0;
    bool bias_flag = false;     // bias > 5 mc_se
};

inline nlohmann::json to_json(const DistributionSummary& d) {
    return {{"theta", d.theta},
            {"mean", d.mean},
            {"bias", d.bias},
            {"mc_se", d.mc_se},
            {"mean_bound", d.mean_bound},
            {"theoretical_var", d.theoretical_var},
            {"empirical_var", d.empirical_var},
            {"var_ratio", d.var_ratio},
            {"ks", d.ks},
            {"ci_coverage", d.ci_coverage},
            {"bias_flag", d.bias_flag}};
}

inline DistributionSummary summarize_distribution(const std::vector<double>& estimates,
                                                  const std::vector<double>& sigma2_hat, double theta, double sigma2,
                                                  double w_tilde_l2, double w_hat_l2_mean, Index t1,
                                                  double alpha_ci = 0.05) {
    DistributionSummary d;
    const double n = static_cast<double>(estimates.size());
    d.theta = theta;
    d.mean = stats::mean(estimates);
    d.bias = std::abs(d.mean - theta);
    d.empirical_var = stats::variance(estimates);
    d.mc_se = std::sqrt(d.empirical_var / n);
    d.theoretical_var = sigma2 * w_tilde_l2 * w_tilde_l2 / static_cast<double>(t1);
    d.mean_bound = 3.0 * std::sqrt(d.theoretical_var / n);
    d.var_ratio = d.theoretical_var > 0.0 ? d.empirical_var / d.theoretical_var : 0.0;
    if (d.theoretical_var > 0.0) {
        std::vector<double> z;
        for (double x : estimates) z.push_back((x - theta) / std::sqrt(d.theoretical_var));
        d.ks = stats::ks_distance_normal(z);
    }
    // Coverage of the plug-in interval; the weight norm is the replicate average.
    const double zq = stats::normal_quantile(1.0 - alpha_ci / 2.0);
    double covered = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double half = zq * std::sqrt(sigma2_hat[i]) * w_hat_l2_mean / std::sqrt(static_cast<double>(t1));
        covered += std::abs(estimates[i] - theta) <= half ? 1.0 : 0.0;
    }
    d.ci_coverage = covered / n;
    d.bias_flag = d.bias > 5.0 * d.mc_se;
    return d;
}

/// Shared body of the normality and bias studies: k is the pre-period rank.
inline ExperimentReport run_distribution(const ScenarioSpec& spec, const GroundTruth& truth, Index replicates,
                                         int jobs, const std::string& scenario) {
    detail::require(replicates >= 1, "replicates must be >= 1");
    detail::Stopwatch clock;
    const Index k = truth.rank_pre;
    const std::size_t regimes = truth.expected_post.size();
    std::vector<std::vector<double>> est(regimes, std::vector<double>(static_cast<std::size_t>(replicates)));
    std::vector<double> sigma2_hat(static_cast<std::size_t>(replicates)), w_l2(static_cast<std::size_t>(replicates));

    parallel_for(replicates, jobs, [&](Index i) {
        const auto obs = observe(truth, spec.sigma2, spec.seed, static_cast<std::uint64_t>(i));
        const auto model = fit_weights(obs.target_pre, decompose(obs.donors_pre), k);
        const auto u = static_cast<std::size_t>(i);
        for (std::size_t g = 0; g < regimes; ++g) est[g][u] = estimate_theta(model.weights, obs.donors_post[g]);
        sigma2_hat[u] = (obs.target_pre - obs.donors_pre * model.weights).squaredNorm() / static_cast<double>(spec.t0);
        w_l2[u] = model.l2_norm;
    });

    ExperimentReport rep;
    rep.scenario = scenario;
    rep.seed = spec.seed;
    rep.replicates = replicates;
    rep.config = to_json(spec);
    rep.config["k"] = k;
    const double w_tilde_l2 = truth.w_tilde.norm();
    const double w_hat_mean = stats::mean(w_l2);
    rep.summary["w_tilde_l2"] = w_tilde_l2;
    rep.summary["w_true_l2"] = truth.w_true.norm();
    rep.summary["w_hat_l2_mean"] = w_hat_mean;
    rep.summary["sigma2_hat_median"] = stats::median(sigma2_hat);
    for (std::size_t g = 0; g < regimes; ++g) {
        const auto& name = truth.regime_names[g];
        const auto d = summarize_distribution(est[g], sigma2_hat, truth.theta[g], spec.sigma2, w_tilde_l2, w_hat_mean,
                                              spec.t1);
        rep.summary[name] = to_json(d);
        rep.per_replicate[name] = est[g];
        std::vector<double> z;
        if (d.theoretical_var > 0.0)
            for (double x : est[g]) z.push_back((x - d.theta) / std::sqrt(d.theoretical_var));
        rep.curves.push_back(detail::standardized_histogram("histogram_" + name, z));
    }
    rep.per_replicate["sigma2_hat"] = sigma2_hat;
    rep.per_replicate["w_hat_l2"] = w_l2;
    rep.runtime_seconds = clock.seconds();
    return rep;
}

inline ExperimentReport run_normality(const ScenarioSpec& spec, Index replicates, int jobs = 1) {
    return run_distribution(spec, gen_normality_dual(spec), replicates, jobs, "normality_dual");
}

inline ExperimentReport run_bias(const ScenarioSpec& spec, Index replicates, int jobs = 1) {
    return run_distribution(spec, gen_bias(spec), replicates, jobs, "bias");
}

// ---------------------------------------------------------------------------
// Subspace test calibration on the two-block design.

struct CalibrationArm {
    SubspaceDesign design;
    double population_tau_alpha = 0.0;
    double population_overlap = 0.0;
    bool type2_condition = false;
    std::vector<double> tau_hat, tau_alpha, sigma_hat;
    std::vector<Index> r_pre, r_post;
    std::vector<bool> reject;

    double rejection_rate() const {
        return reject.empty() ? 0.0
                              : static_cast<double>(std::count(reject.begin(), reject.end(), true)) / reject.size();
    }
};

/// Population quantities of a design: right bases, trailing retained singular
/// values, and the inputs to tau(alpha) at the true sigma.
inline CriticalValueInputs population_inputs(const GroundTruth& truth, const SubspaceDesign& d, double alpha, double c,
                                             double& overlap) {
    const auto pre = decompose(truth.expected_pre);
    const auto post = decompose(truth.expected_post.front());
    const Index r_pre = pre.numerical_rank();
    const Index r_post = post.numerical_rank();
    overlap = subspace_overlap(pre.right_vectors.leftCols(r_pre), post.right_vectors.leftCols(r_post));
    return {d.t0, d.t1, d.n_d, std::sqrt(d.sigma2), r_post, pre.singular_values(r_pre - 1),
            post.singular_values(r_post - 1), alpha, c};
}

/// Runs `trials` noisy draws of one design through the exact test. Ranks use
/// `policy`; sigma is the PCR residual estimate for the design's target.
inline CalibrationArm run_calibration_arm(const SubspaceDesign& design, Index trials, double alpha, double c, int jobs,
                                          const RankPolicy& policy = RankPolicy::energy_fraction(0.99)) {
    detail::require(trials >= 1, "trials must be >= 1");
    const GroundTruth truth = gen_subspace_design(design);
    CalibrationArm arm;
    arm.design = design;
    const auto pop = population_inputs(truth, design, alpha, c, arm.population_overlap);
    arm.population_tau_alpha = critical_value(pop);
    arm.type2_condition = type2_condition(pop, arm.population_overlap);

    const auto n = static_cast<std::size_t>(trials);
    arm.tau_hat.resize(n);
    arm.tau_alpha.resize(n);
    arm.sigma_hat.resize(n);
    arm.r_pre.resize(n);
    arm.r_post.resize(n);
    std::vector<char> reject(n, 0);
    parallel_for(trials, jobs, [&](Index i) {
        const auto obs = observe(truth, design.sigma2, design.seed, static_cast<std::uint64_t>(i));
        const auto pre = decompose(obs.donors_pre);
        const auto post = decompose(obs.donors_post.front());
        const auto model = fit_weights(obs.target_pre, pre, select_rank(pre, policy).k);
        const double sigma =
            std::sqrt((obs.target_pre - obs.donors_pre * model.weights).squaredNorm() / static_cast<double>(design.t0));
        const auto res = run_test(pre, post, alpha, sigma, c, policy, policy);
        const auto u = static_cast<std::size_t>(i);
        arm.tau_hat[u] = res.tau_hat;
        arm.tau_alpha[u] = res.tau_alpha;
        arm.sigma_hat[u] = sigma;
        arm.r_pre[u] = res.r_pre;
        arm.r_post[u] = res.r_post;
        reject[u] = res.reject ? 1 : 0;
    });
    for (char r : reject) arm.reject.push_back(r != 0);
    return arm;
}

inline nlohmann::json to_json(const CalibrationArm& a) {
    return {{"design", to_json(a.design)},
            {"population_tau_alpha", a.population_tau_alpha},
            {"population_overlap", a.population_overlap},
            {"type2_condition", a.type2_condition},
            {"rejection_rate", a.rejection_rate()},
            {"retention_rate", 1.0 - a.rejection_rate()}};
}

/// H0 arm (post loads on the pre factors) and H1 arm (post loads on fresh factors).
inline ExperimentReport run_test_calibration(const SubspaceDesign& h0, const SubspaceDesign& h1, Index trials,
                                             double alpha = 0.05, double c = kGaussianC, int jobs = 1,
                                             const RankPolicy& policy = RankPolicy::energy_fraction(0.99)) {
    detail::Stopwatch clock;
    ExperimentReport rep;
    rep.scenario = "test_calibration";
    rep.seed = h0.seed;
    rep.replicates = trials;
    rep.config = {{"h0", to_json(h0)}, {"h1", to_json(h1)}, {"alpha", alpha}, {"c", c},
                  {"rank_policy", {{"method", to_string(policy.method)}, {"energy", policy.energy}}},
                  {"sigma", "pcr residual estimate"}};
    for (const auto& [name, design] : {std::pair{"h0", h0}, std::pair{"h1", h1}}) {
        const auto arm = run_calibration_arm(design, trials, alpha, c, jobs, policy);
        rep.summary[name] = to_json(arm);
        nlohmann::json per;
        per["tau_hat"] = arm.tau_hat;
        per["tau_alpha"] = arm.tau_alpha;
        per["sigma_hat"] = arm.sigma_hat;
        per["r_pre"] = arm.r_pre;
        per["r_post"] = arm.r_post;
        per["reject"] = arm.reject;
        rep.per_replicate[name] = per;
    }
    rep.runtime_seconds = clock.seconds();
    return rep;
}

// ---------------------------------------------------------------------------
// Elbow demonstration.

inline ExperimentReport run_elbow(Index dim, Index r, const std::vector<double>& sigma2_grid, std::uint64_t seed) {
    detail::Stopwatch clock;
    const auto spectra = gen_elbow(dim, r, sigma2_grid, seed);
    ExperimentReport rep;
    rep.scenario = "elbow";
    rep.seed = seed;
    rep.replicates = 1;
    rep.config = {{"dim", dim}, {"r", r}, {"sigma2_grid", sigma2_grid}, {"seed", seed},
                  {"generator", std::string(rng::kGeneratorName)}};
    CurveTable curve{"spectra", {"index"}, {}};
    std::vector<double> ratios;
    std::vector<Index> elbow_rank;
    for (std::size_t g = 0; g < sigma2_grid.size(); ++g) {
        curve.columns.push_back("sigma2_" + csv::format_double(sigma2_grid[g]));
        const Vector& s = spectra.spectra[g];
        ratios.push_back(r < s.size() && s(r) > 0.0 ? s(r - 1) / s(r) : std::numeric_limits<double>::infinity());
        SpectralDecomposition dec;
        dec.singular_values = s;
        dec.m = s.size();
        elbow_rank.push_back(select_rank(dec, RankPolicy::elbow()).k);
        rep.per_replicate["spectra"].push_back(detail::to_std(s));
    }
    for (Index i = 0; i < dim; ++i) {
        std::vector<double> row{static_cast<double>(i + 1)};
        for (const auto& s : spectra.spectra) row.push_back(s(i));
        curve.rows.push_back(std::move(row));
    }
    std::vector<nlohmann::json> ratio_json;
    for (double x : ratios) ratio_json.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    rep.summary = {{"gap_ratio", ratio_json}, {"elbow_rank", elbow_rank}};
    rep.curves.push_back(std::move(curve));
    rep.runtime_seconds = clock.seconds();
    return rep;
}

// ---------------------------------------------------------------------------
// Noise-variance estimator and singular-value band.

/// Median of the PCR residual variance over replicates of a full-rank-r design
/// with simplex weights, fit at k = r.
inline ExperimentReport run_variance_study(ScenarioSpec spec, Index replicates, int jobs = 1) {
    detail::Stopwatch clock;
    spec.scenario = Scenario::normality_dual;
    const GroundTruth truth = gen_normality_dual(spec);
    std::vector<double> s2(static_cast<std::size_t>(replicates));
    parallel_for(replicates, jobs, [&](Index i) {
        const auto obs = observe(truth, spec.sigma2, spec.seed, static_cast<std::uint64_t>(i));
        const auto model = fit_weights(obs.target_pre, decompose(obs.donors_pre), truth.rank_pre);
        s2[static_cast<std::size_t>(i)] =
            (obs.target_pre - obs.donors_pre * model.weights).squaredNorm() / static_cast<double>(spec.t0);
    });
    ExperimentReport rep;
    rep.scenario = "variance";
    rep.seed = spec.seed;
    rep.replicates = replicates;
    rep.config = to_json(spec);
    const double med = stats::median(s2);
    rep.summary = {{"sigma2", spec.sigma2},
                   {"sigma2_hat_median", med},
                   {"relative_error", spec.sigma2 > 0.0 ? (med - spec.sigma2) / spec.sigma2 : 0.0},
                   {"w_tilde_l2", truth.w_tilde.norm()}};
    rep.per_replicate["sigma2_hat"] = s2;
    rep.runtime_seconds = clock.seconds();
    return rep;
}

/// Draws a fixed rank-r expectation plus Gaussian noise and checks every
/// index against the band C sigma (sqrt T + sqrt N + t).
inline ExperimentReport run_band_study(Index rows, Index cols, Index r, double sigma, double t, double c,
                                       Index draws, std::uint64_t seed, int jobs = 1) {
    detail::Stopwatch clock;
    const Matrix expected =
        detail::normal_matrix(rows, r, seed, "band/U") * detail::normal_matrix(cols, r, seed, "band/V").transpose();
    const Vector s = decompose(expected).singular_values;
    const double band = singular_value_band(rows, cols, sigma, t, c);
    std::vector<double> max_dev(static_cast<std::size_t>(draws));
    parallel_for(draws, jobs, [&](Index i) {
        Matrix noise(rows, cols);
        rng::Stream stream(seed, "band/noise", static_cast<std::uint64_t>(i));
        rng::fill_normal(noise, stream, sigma);
        const Vector sh = decompose(expected + noise).singular_values;
        max_dev[static_cast<std::size_t>(i)] = (s - sh).cwiseAbs().maxCoeff();
    });
    const auto inside = std::count_if(max_dev.begin(), max_dev.end(), [&](double d) { return d <= band; });
    ExperimentReport rep;
    rep.scenario = "band";
    rep.seed = seed;
    rep.replicates = draws;
    rep.config = {{"rows", rows}, {"cols", cols}, {"r", r}, {"sigma", sigma}, {"t", t}, {"c", c}, {"seed", seed}};
    rep.summary = {{"band", band},
                   {"fraction_within", static_cast<double>(inside) / static_cast<double>(draws)},
                   {"max_deviation", *std::max_element(max_dev.begin(), max_dev.end())}};
    rep.per_replicate["max_deviation"] = max_dev;
    rep.runtime_seconds = clock.seconds();
    return rep;
}

// ---------------------------------------------------------------------------
// A/B-style study with randomly permuted donor clusters.

/// 1 - (theta - theta_hat)^2 / (theta - rct)^2; empty when theta equals the RCT mean.
inline std::optional<double> se_metric(double theta, double theta_hat, double rct_mean) {
    const double denom = (theta - rct_mean) * (theta - rct_mean);
    if (!(denom > 0.0)) return std::nullopt;
    return 1.0 - (theta - theta_hat) * (theta - theta_hat) / denom;
}

struct AbStudyOptions {
    RankPolicy rank = RankPolicy::energy_fraction(0.99);
    double alpha = 0.05;
    double c = kGaussianC;
};

inline ExperimentReport run_ab_study(const AbSpec& spec, Index permutations, int jobs = 1,
                                     const AbStudyOptions& opt = {}) {
    detail::require(permutations >= 1, "permutations must be >= 1");
    detail::Stopwatch clock;
    const AbData data = gen_ab_data(spec);
    const int D = spec.interventions;
    const auto P = static_cast<std::size_t>(permutations);

    struct Cell {
        bool pass = false;
        double tau_hat = 0.0, tau_alpha = 0.0, sigma = 0.0;
        std::vector<double> se;  // defined values only
        Index undefined = 0;
        std::vector<Index> targets;
        std::vector<double> theta_hat, rct;
    };
    std::vector<std::vector<Cell>> cells(P, std::vector<Cell>(static_cast<std::size_t>(D)));
    std::vector<std::vector<int>> partitions(P);

    parallel_for(permutations, jobs, [&](Index p) {
        std::vector<Index> order(static_cast<std::size_t>(spec.n_units));
        for (Index i = 0; i < spec.n_units; ++i) order[static_cast<std::size_t>(i)] = i;
        rng::Stream stream(spec.seed, "ab/permutation", static_cast<std::uint64_t>(p));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);
        const auto assign = cluster_assignments(order, D);
        const ObservedPanel panel = ab_panel(data, assign);
        partitions[static_cast<std::size_t>(p)] = assign;

        for (int d = 1; d < D; ++d) {
            Cell& cell = cells[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)];
            const DonorView donors = donor_view(panel, d);
            const auto pre = decompose(donors.pre);
            const auto post = decompose(donors.post);
            const Index k = select_rank(pre, opt.rank).k;
            const double rct = donors.post.mean();
            double s2_sum = 0.0;
            for (Index n = 0; n < spec.n_units; ++n) {
                if (assign[static_cast<std::size_t>(n)] == d) continue;
                const Vector target = panel.pre_column(n);
                const auto model = fit_weights(target, pre, k);
                const double th = estimate_theta(model.weights, donors.post);
                s2_sum += estimate_noise_variance(model, target, donors);
                cell.targets.push_back(n);
                cell.theta_hat.push_back(th);
                cell.rct.push_back(rct);
                if (auto se = se_metric(data.theta(n, d), th, rct))
                    cell.se.push_back(*se);
                else
                    ++cell.undefined;
            }
            cell.sigma = std::sqrt(s2_sum / static_cast<double>(cell.targets.size()));
            const auto res = run_test(pre, post, opt.alpha, cell.sigma, opt.c, opt.rank, opt.rank);
            cell.pass = !res.reject;
            cell.tau_hat = res.tau_hat;
            cell.tau_alpha = res.tau_alpha;
        }
    });

    ExperimentReport rep;
    rep.scenario = "ab";
    rep.seed = spec.seed;
    rep.replicates = permutations;
    rep.config = to_json(spec);
    rep.config["rank_policy"] = {{"method", to_string(opt.rank.method)}, {"energy", opt.rank.energy}};
    rep.config["alpha"] = opt.alpha;
    rep.config["c"] = opt.c;
    rep.config["test_sigma"] = "pooled pcr residual estimate over the group's targets";

    CurveTable table{"ab_summary", {"intervention", "pass_rate", "median_se", "mean_permutation_median_se", "undefined_se"}, {}};
    double passes_total = 0.0;
    for (int d = 1; d < D; ++d) {
        std::vector<double> pooled, per_perm_median;
        double passes = 0.0;
        Index undefined = 0;
        nlohmann::json per;
        for (std::size_t p = 0; p < P; ++p) {
            const Cell& c = cells[p][static_cast<std::size_t>(d)];
            passes += c.pass ? 1.0 : 0.0;
            undefined += c.undefined;
            pooled.insert(pooled.end(), c.se.begin(), c.se.end());
            if (!c.se.empty()) per_perm_median.push_back(stats::median(c.se));
            per.push_back({{"pass", c.pass},
                           {"tau_hat", c.tau_hat},
                           {"tau_alpha", c.tau_alpha},
                           {"sigma", c.sigma},
                           {"targets", c.targets},
                           {"theta_hat", c.theta_hat},
                           {"se", c.se},
                           {"undefined_se", c.undefined}});
        }
        passes_total += passes;
        const std::string key = "d" + std::to_string(d);
        const double rate = passes / static_cast<double>(P);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double med = pooled.empty() ? nan : stats::median(pooled);
        const double mean_med = per_perm_median.empty() ? nan : stats::mean(per_perm_median);
        auto or_null = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
        rep.summary[key] = {{"pass_rate", rate},
                            {"median_se", or_null(med)},
                            {"mean_permutation_median_se", or_null(mean_med)},
                            {"undefined_se", undefined}};
        rep.per_replicate[key] = per;
        table.rows.push_back({static_cast<double>(d), rate, med, mean_med,
                              static_cast<double>(undefined)});
    }
    rep.summary["overall_pass_rate"] = passes_total / static_cast<double>(P * static_cast<std::size_t>(D - 1));
    rep.per_replicate["partitions"] = partitions;
    rep.curves.push_back(std::move(table));
    rep.runtime_seconds = clock.seconds();
    return rep;
}

}  // namespace si
