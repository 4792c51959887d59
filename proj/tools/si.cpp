// si: command-line front end.
//
// Exit codes: 0 success (test: H0 retained), 1 test rejected H0,
// 2 invalid input or configuration, 3 numerical failure, 4 internal error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <si/si.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitReject = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 4;

struct PanelArgs {
    std::string outcomes;
    std::string assignments;
    std::optional<si::Index> t0;
    std::optional<std::string> post;
    std::optional<int> interventions;

    void attach(CLI::App* cmd) {
        cmd->add_option("panel", outcomes, "Outcome CSV (rows = periods, columns = units)")->required();
        cmd->add_option("--assignments,-a", assignments, "CSV of unit,intervention for the post period")->required();
        cmd->add_option("--t0", t0, "Number of pre-intervention periods");
        cmd->add_option("--post", post, "Optional CSV with the post-period rows");
        cmd->add_option("--interventions", interventions, "Number of interventions D (default: max id + 1)");
    }

    si::ObservedPanel load() const {
        for (const auto& f : {outcomes, assignments, post.value_or(outcomes)})
            if (!fs::exists(f)) throw si::InputError("cannot open file: " + f);
        std::optional<fs::path> post_path;
        if (post) post_path = *post;
        si::Index t = 0;
        if (t0) {
            t = *t0;
        } else if (post) {
            t = si::detail::read_outcome_table(outcomes).values.rows();
        } else {
            throw si::InputError("--t0 is required unless --post is given");
        }
        return si::load_panel(outcomes, assignments, t, post_path, interventions);
    }
};

struct RankArgs {
    std::string method = "energy";
    double energy = 0.99;
    std::optional<double> cutoff;
    std::optional<si::Index> k;

    void attach(CLI::App* cmd, const std::string& prefix = "") {
        cmd->add_option("--" + prefix + "rank-method", method, "elbow | energy | threshold | fixed")
            ->capture_default_str();
        cmd->add_option("--" + prefix + "energy", energy, "Energy fraction for the energy rule")->capture_default_str();
        cmd->add_option("--" + prefix + "cutoff", cutoff, "Singular-value cutoff for the threshold rule");
        cmd->add_option("--" + prefix + "k", k, "Fixed rank (implies the fixed rule)");
    }

    si::RankPolicy policy() const {
        if (k) {
            if (*k < 1) throw si::InputError("rank must be >= 1");
            return si::RankPolicy::fixed(*k);
        }
        switch (si::parse_rank_method(method)) {
            case si::RankMethod::elbow: return si::RankPolicy::elbow();
            case si::RankMethod::energy:
                if (!(energy > 0.0 && energy <= 1.0)) throw si::InputError("energy threshold must lie in (0, 1]");
                return si::RankPolicy::energy_fraction(energy);
            case si::RankMethod::threshold:
                if (!cutoff) throw si::InputError("the threshold rule needs --cutoff");
                return si::RankPolicy::threshold(*cutoff);
            case si::RankMethod::fixed: throw si::InputError("the fixed rule needs --k");
        }
        return {};
    }
};

void check_alpha(double a, const char* what) {
    if (!(a > 0.0 && a < 1.0)) throw si::InputError(std::string(what) + " must lie in (0, 1)");
}

void check_rho(const std::optional<double>& rho) {
    if (rho && !(*rho > 0.0 && *rho < 1.0)) throw si::InputError("rho must lie in (0, 1)");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
    if (seed) return *seed;
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::cerr << "no --seed given; drew seed " << s << " from system entropy\n";
    return s;
}

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw si::InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw si::InputError("cannot create output directory: " + dir.string());
}

json panel_json(const PanelArgs& p) {
    json j{{"outcomes", p.outcomes}, {"assignments", p.assignments}};
    j["t0"] = p.t0 ? json(*p.t0) : json(nullptr);
    j["post"] = p.post ? json(*p.post) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------

struct EstimateCmd {
    PanelArgs panel;
    RankArgs rank;
    RankArgs test_rank;
    double alpha_ci = 0.05;
    bool test = false;
    double alpha = 0.05;
    double c = si::kGaussianC;
    std::optional<double> sigma;
    std::optional<double> rho;
    std::vector<std::string> targets;
    std::optional<std::string> out;
    int jobs = 0;

    int run() const {
        check_alpha(alpha_ci, "--alpha-ci");
        check_alpha(alpha, "--alpha");
        check_rho(rho);
        if (sigma && !(*sigma >= 0.0)) throw si::InputError("--sigma must be non-negative");
        const auto p = panel.load();
        si::EstimateOptions opt;
        opt.rank = rank.policy();
        opt.test_rank = test_rank.policy();
        opt.alpha_ci = alpha_ci;
        opt.run_test = test || rho.has_value();
        opt.test_alpha = alpha;
        opt.c_constant = c;
        opt.sigma_override = sigma;
        opt.heuristic_rho = rho;
        opt.jobs = si::resolve_jobs(jobs);
        for (const auto& label : targets) {
            const auto& labels = p.unit_labels();
            const auto it = std::find(labels.begin(), labels.end(), label);
            if (it == labels.end()) throw si::InputError("unknown target unit '" + label + "'");
            opt.targets.push_back(static_cast<si::Index>(it - labels.begin()));
        }
        const auto table = si::estimate_all(p, opt);

        json config{{"command", "estimate"},
                    {"panel", panel_json(panel)},
                    {"rank", si::to_json(opt.rank)},
                    {"alpha_ci", alpha_ci},
                    {"run_test", opt.run_test},
                    {"test_alpha", alpha},
                    {"c_constant", c},
                    {"test_rank", si::to_json(opt.test_rank)}};
        config["sigma_override"] = sigma ? json(*sigma) : json(nullptr);
        config["heuristic_rho"] = rho ? json(*rho) : json(nullptr);
        config["targets"] = targets;

        if (out) {
            const fs::path dir = *out;
            make_dir(dir);
            si::write_estimate_csv(table, p, dir / "estimates.csv");
            json doc{{"config", config}, {"panel", si::panel_metadata(p)}};
            doc["estimates"] = si::to_json(table, p);
            write_json(doc, dir / "estimates.json");
        }

        std::cout << "panel: T=" << p.num_periods() << " T0=" << p.t0() << " N=" << p.num_units()
                  << " D=" << p.num_interventions() << '\n';
        for (int d : table.skipped_interventions)
            std::cout << "intervention " << d << ": no donors in the post period, skipped\n";
        for (const auto& r : table.rows) {
            std::cout << p.unit_labels()[static_cast<std::size_t>(r.unit)] << " d=" << r.intervention;
            if (r.estimate)
                std::cout << " theta_hat=" << r.estimate->theta_hat << " ci=[" << r.estimate->ci_low << ", "
                          << r.estimate->ci_high << "] k=" << r.estimate->k;
            if (r.observed_post_mean) std::cout << " observed_mean=" << *r.observed_post_mean;
            if (r.test) std::cout << " test=" << (r.test->reject ? "reject" : "retain");
            std::cout << '\n';
        }
        return 0;
    }
};

struct TestCmd {
    PanelArgs panel;
    RankArgs rank;
    int d = 0;
    double alpha = 0.05;
    double c = si::kGaussianC;
    std::optional<double> sigma;
    std::optional<double> rho;
    std::optional<std::string> out;

    int run() const {
        check_alpha(alpha, "--alpha");
        check_rho(rho);
        if (sigma && !(*sigma >= 0.0)) throw si::InputError("--sigma must be non-negative");
        const auto policy = rank.policy();
        const auto p = panel.load();
        const si::DonorView donors = si::donor_view(p, d);
        si::SubspaceTestResult res;
        if (rho) {
            res = si::heuristic_test(donors, *rho, policy);
        } else {
            const double s = sigma ? *sigma : si::pooled_sigma_hat(p, d, policy);
            res = si::run_test(donors, alpha, s, c, policy);
        }
        json doc = si::to_json(res);
        doc["intervention"] = d;
        doc["donors"] = donors.size();
        doc["sigma_source"] = rho ? "none" : (sigma ? "override" : "pooled pcr residual");
        doc["rank"] = si::to_json(policy);
        doc["panel"] = panel_json(panel);
        if (out) write_json(doc, *out);
        std::cout << doc.dump(2) << '\n';
        return res.reject ? kExitReject : 0;
    }
};

struct SpectrumCmd {
    std::string matrix;
    std::optional<std::string> assignments;
    std::optional<si::Index> t0;
    std::optional<int> d;
    std::optional<std::string> block;
    double energy = 0.99;
    std::optional<double> cutoff;
    std::optional<double> sigma;
    double t = 3.0;
    std::optional<std::string> out;

    int run() const {
        si::Matrix m;
        json source{{"matrix", matrix}};
        if (assignments || d) {
            if (!assignments || !t0 || !d) throw si::InputError("donor spectra need --assignments, --t0 and --d");
            const auto p = si::load_panel(matrix, *assignments, *t0);
            const auto view = si::donor_view(p, *d);
            const std::string which = block.value_or("pre");
            if (which != "pre" && which != "post") throw si::InputError("--block must be pre or post");
            m = which == "pre" ? view.pre : view.post;
            source["intervention"] = *d;
            source["block"] = which;
        } else {
            m = si::detail::read_outcome_table(matrix).values;
        }
        const auto dec = si::decompose(m);
        json doc{{"source", source}, {"rows", dec.rows}, {"cols", dec.cols}};
        doc["singular_values"] = std::vector<double>(dec.singular_values.data(),
                                                     dec.singular_values.data() + dec.singular_values.size());
        doc["energy_fractions"] = si::energy_fractions(dec.singular_values);
        doc["numerical_rank"] = dec.numerical_rank();
        doc["rank_elbow"] = si::select_rank(dec, si::RankPolicy::elbow()).k;
        doc["rank_energy"] = {{"energy", energy}, {"k", si::select_rank(dec, si::RankPolicy::energy_fraction(energy)).k}};
        if (cutoff) doc["rank_threshold"] = {{"cutoff", *cutoff}, {"k", si::select_rank(dec, si::RankPolicy::threshold(*cutoff)).k}};
        if (sigma) doc["band"] = {{"sigma", *sigma}, {"t", t}, {"half_width", si::singular_value_band(dec, *sigma, t)}};
        if (out) write_json(doc, *out);
        std::cout << doc.dump(2) << '\n';
        return 0;
    }
};

struct SimulateCmd {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out = "sim";

    int run() const {
        const fs::path dir = out;
        const std::uint64_t s = resolve_seed(seed);
        if (scenario == "ab") {
            si::AbSpec spec;
            spec.seed = s;
            const auto data = si::gen_ab_data(spec);
            const auto panel = si::gen_ab_panel(data);
            make_dir(dir);
            si::write_panel(panel, dir / "outcomes.csv", dir / "assignments.csv");
            si::write_matrix_csv(data.theta, dir / "theta.csv");
            write_json({{"scenario", "ab"}, {"config", si::to_json(spec)}, {"panel", si::panel_metadata(panel)}},
                       dir / "metadata.json");
            std::cout << "wrote " << (dir / "outcomes.csv").string() << '\n';
            return 0;
        }
        const si::Scenario sc = si::parse_scenario(scenario);
        if (sc == si::Scenario::elbow) {
            const std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8};
            const auto spectra = si::gen_elbow(100, 10, grid, s);
            make_dir(dir);
            si::Matrix m(100, static_cast<si::Index>(grid.size()));
            for (std::size_t g = 0; g < grid.size(); ++g) m.col(static_cast<si::Index>(g)) = spectra.spectra[g];
            si::write_matrix_csv(m, dir / "spectra.csv");
            write_json({{"scenario", "elbow"},
                        {"config", {{"dim", 100}, {"r", 10}, {"sigma2_grid", grid}, {"seed", s},
                                    {"generator", std::string(si::rng::kGeneratorName)}}},
                        {"columns", "one column of singular values per sigma2 grid point"}},
                       dir / "metadata.json");
            std::cout << "wrote " << (dir / "spectra.csv").string() << '\n';
            return 0;
        }
        if (sc == si::Scenario::custom) throw si::InputError("scenario 'custom' has no default configuration");
        si::ScenarioSpec spec = sc == si::Scenario::consistency ? si::ScenarioSpec::consistency_defaults(s)
                                : sc == si::Scenario::bias      ? si::ScenarioSpec::bias_defaults(s)
                                                                : si::ScenarioSpec::normality_defaults(s);
        const auto truth = si::generate(spec);
        const auto panel = si::simulated_panel(truth, spec.sigma2, s);
        make_dir(dir);
        si::write_panel(panel, dir / "outcomes.csv", dir / "assignments.csv");
        si::write_matrix_csv(truth.expected_pre, dir / "expected_pre.csv");
        for (std::size_t g = 0; g < truth.expected_post.size(); ++g)
            si::write_matrix_csv(truth.expected_post[g], dir / ("expected_post_" + truth.regime_names[g] + ".csv"));
        write_json(si::truth_json(truth), dir / "ground_truth.json");
        write_json({{"scenario", si::to_string(sc)},
                    {"config", si::to_json(spec)},
                    {"panel", si::panel_metadata(panel)},
                    {"layout", "donor copies per post regime (intervention g = regime g); last column 'target' in group 0"}},
                   dir / "metadata.json");
        std::cout << "wrote " << (dir / "outcomes.csv").string() << " (t0=" << panel.t0() << ")\n";
        return 0;
    }
};

struct ReproduceCmd {
    std::string figure;
    std::optional<std::uint64_t> seed;
    std::optional<si::Index> replicates;
    std::string out = "results";
    int jobs = 0;

    int run() const {
        static const std::vector<std::string> kNames{"fig3", "fig4", "fig5", "fig7", "ab", "calibration", "variance",
                                                     "band"};
        if (std::find(kNames.begin(), kNames.end(), figure) == kNames.end()) {
            std::string names;
            for (const auto& n : kNames) names += (names.empty() ? "" : ", ") + n;
            throw si::InputError("unknown experiment '" + figure + "' (valid: " + names + ")");
        }
        if (replicates && *replicates < 1) throw si::InputError("--replicates must be >= 1");
        const std::uint64_t s = resolve_seed(seed);
        const int j = si::resolve_jobs(jobs);
        auto reps = [&](si::Index def) { return replicates.value_or(def); };

        si::ExperimentReport rep;
        if (figure == "fig3") {
            rep = si::run_elbow(100, 10, {0.0, 0.2, 0.4, 0.6, 0.8}, s);
        } else if (figure == "fig4") {
            rep = si::run_consistency(si::ScenarioSpec::consistency_defaults(s), reps(100), j);
        } else if (figure == "fig5") {
            rep = si::run_normality(si::ScenarioSpec::normality_defaults(s), reps(5000), j);
        } else if (figure == "fig7") {
            rep = si::run_bias(si::ScenarioSpec::bias_defaults(s), reps(5000), j);
        } else if (figure == "ab") {
            si::AbSpec spec;
            spec.seed = s;
            rep = si::run_ab_study(spec, reps(100), j);
        } else if (figure == "calibration") {
            si::SubspaceDesign h0{200, 200, 200, 5, 5, 0.01, true, s};
            si::SubspaceDesign h1 = h0;
            h1.inclusion = false;
            rep = si::run_test_calibration(h0, h1, reps(500), 0.05, si::kGaussianC, j);
        } else if (figure == "variance") {
            si::ScenarioSpec spec{2000, 1, 400, 15, 15, 0.5, si::Scenario::normality_dual, s, {}, si::WeightLaw::simplex};
            rep = si::run_variance_study(spec, reps(100), j);
        } else {
            rep = si::run_band_study(100, 100, 10, 1.0, 3.0, 1.0, reps(200), s, j);
        }
        rep.config["experiment"] = figure;
        si::write_report(rep, out);
        std::cout << rep.summary.dump(2) << '\n';
        std::cerr << "wrote " << (fs::path(out) / "report.json").string() << " in " << rep.runtime_seconds << " s\n";
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic interventions: counterfactual estimation, subspace inclusion test, simulations"};
    app.require_subcommand(1);

    EstimateCmd est;
    auto* c_est = app.add_subcommand("estimate", "Estimate every (unit, intervention) post-period mean");
    est.panel.attach(c_est);
    est.rank.attach(c_est);
    est.test_rank.attach(c_est, "test-");
    c_est->add_option("--alpha-ci", est.alpha_ci, "Confidence interval level alpha")->capture_default_str();
    c_est->add_flag("--test", est.test, "Run the subspace inclusion test for each pair");
    c_est->add_option("--alpha", est.alpha, "Test level")->capture_default_str();
    c_est->add_option("--c", est.c, "Constant C in the critical value")->capture_default_str();
    c_est->add_option("--sigma", est.sigma, "Noise level for the test (default: estimated)");
    c_est->add_option("--rho,--heuristic", est.rho, "Use the heuristic test with this fraction");
    c_est->add_option("--target", est.targets, "Restrict to these unit labels");
    c_est->add_option("--out,-o", est.out, "Output directory for estimates.csv and estimates.json");
    c_est->add_option("--jobs,-j", est.jobs, "Worker threads (default: $SI_JOBS or all cores)");

    TestCmd tst;
    auto* c_tst = app.add_subcommand("test", "Subspace inclusion test for one donor group");
    tst.panel.attach(c_tst);
    tst.rank.attach(c_tst);
    c_tst->add_option("--d", tst.d, "Intervention id of the donor group")->required();
    c_tst->add_option("--alpha", tst.alpha, "Test level")->capture_default_str();
    c_tst->add_option("--c", tst.c, "Constant C in the critical value")->capture_default_str();
    c_tst->add_option("--sigma", tst.sigma, "Noise level (default: pooled PCR residual estimate)");
    c_tst->add_option("--rho,--heuristic", tst.rho, "Use the heuristic test with this fraction");
    c_tst->add_option("--out,-o", tst.out, "Also write the JSON result here");

    SpectrumCmd spc;
    auto* c_spc = app.add_subcommand("spectrum", "Singular values and rank choices of a matrix or donor block");
    c_spc->add_option("matrix", spc.matrix, "CSV matrix or panel outcome file")->required();
    c_spc->add_option("--assignments,-a", spc.assignments, "Assignment CSV (selects a donor block)");
    c_spc->add_option("--t0", spc.t0, "Number of pre-intervention periods");
    c_spc->add_option("--d", spc.d, "Donor group");
    c_spc->add_option("--block", spc.block, "pre | post (default pre)");
    c_spc->add_option("--energy", spc.energy, "Energy fraction for the energy rule")->capture_default_str();
    c_spc->add_option("--cutoff", spc.cutoff, "Cutoff for the threshold rule");
    c_spc->add_option("--sigma", spc.sigma, "Noise level for the singular value band");
    c_spc->add_option("--t", spc.t, "Band tail parameter")->capture_default_str();
    c_spc->add_option("--out,-o", spc.out, "Also write the JSON result here");

    SimulateCmd sim;
    auto* c_sim = app.add_subcommand("simulate", "Write a synthetic panel with its ground truth");
    c_sim->add_option("scenario", sim.scenario, "consistency | normality_dual | bias | elbow | ab")->required();
    c_sim->add_option("--seed", sim.seed, "Master seed (default: system entropy, recorded)");
    c_sim->add_option("--out,-o", sim.out, "Output directory")->capture_default_str();

    ReproduceCmd rpr;
    auto* c_rpr = app.add_subcommand("reproduce", "Run a Monte Carlo study and write report.json plus CSV curves");
    c_rpr->add_option("figure", rpr.figure, "fig3 | fig4 | fig5 | fig7 | ab | calibration | variance | band")->required();
    c_rpr->add_option("--seed", rpr.seed, "Master seed (default: system entropy, recorded)");
    c_rpr->add_option("--replicates,-n", rpr.replicates, "Override the replicate count");
    c_rpr->add_option("--out,-o", rpr.out, "Output directory")->capture_default_str();
    c_rpr->add_option("--jobs,-j", rpr.jobs, "Worker threads (default: $SI_JOBS or all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (c_est->parsed()) return est.run();
        if (c_tst->parsed()) return tst.run();
        if (c_spc->parsed()) return spc.run();
        if (c_sim->parsed()) return sim.run();
        if (c_rpr->parsed()) return rpr.run();
    } catch (const si::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const si::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}
