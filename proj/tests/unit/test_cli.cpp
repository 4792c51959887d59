// Runs the built `si` executable and checks exit codes and written files.
#include <catch_amalgamated.hpp>

#include <si/synthgen.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "si_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Result run(const std::string& args) {
    const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
    const std::string cmd = std::string("\"") + SI_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// Writes a one-regime panel from the two-block design and returns the
// outcome and assignment paths as a command-line fragment.
std::string subspace_panel(const std::string& name, bool inclusion) {
    const si::SubspaceDesign d{60, 40, 50, 3, 2, 0.01, inclusion, 21};
    const auto panel = si::simulated_panel(si::gen_subspace_design(d), d.sigma2, d.seed);
    const auto dir = scratch() / name;
    fs::create_directories(dir);
    si::write_panel(panel, dir / "outcomes.csv", dir / "assignments.csv");
    return "\"" + (dir / "outcomes.csv").string() + "\" --t0 60 -a \"" + (dir / "assignments.csv").string() + "\"";
}

}  // namespace

TEST_CASE("input errors exit with code 2", "[cli]") {
    const std::string panel = subspace_panel("errors", true);
    const auto missing = (scratch() / "no_such_assignments.csv").string();
    const std::string outcomes = panel.substr(0, panel.find(" -a "));

    auto r = run("estimate " + outcomes + " -a \"" + missing + "\"");
    CHECK(r.code == 2);
    CHECK(r.err.find(missing) != std::string::npos);

    r = run("estimate " + panel + " --k 0");
    CHECK(r.code == 2);
    CHECK(r.err.find("rank must be >= 1") != std::string::npos);

    r = run("test " + panel + " --d 0 --rho 1.5");
    CHECK(r.code == 2);
    CHECK(r.err.find("rho must lie in (0, 1)") != std::string::npos);

    r = run("simulate nonsense --seed 1 --out \"" + (scratch() / "x").string() + "\"");
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown scenario") != std::string::npos);

    r = run("reproduce fig99 --seed 1");
    CHECK(r.code == 2);

    CHECK(run("frobnicate").code == 2);
}

TEST_CASE("test subcommand exit codes follow the decision", "[cli]") {
    auto r = run("test " + subspace_panel("inclusion", true) + " --d 0");
    CHECK(r.code == 0);
    CHECK(r.out.find("\"reject\": false") != std::string::npos);

    r = run("test " + subspace_panel("disjoint", false) + " --d 0");
    CHECK(r.code == 1);
    CHECK(r.out.find("\"reject\": true") != std::string::npos);
}

TEST_CASE("simulate writes a panel and its ground truth", "[cli]") {
    const auto dir = scratch() / "sim";
    const auto r = run("simulate consistency --seed 3 --out \"" + dir.string() + "\"");
    REQUIRE(r.code == 0);
    for (const char* f : {"outcomes.csv", "assignments.csv", "expected_pre.csv", "expected_post_inclusion.csv",
                          "expected_post_violating.csv", "ground_truth.json", "metadata.json"})
        CHECK(fs::exists(dir / f));
    const auto a = slurp(dir / "outcomes.csv");
    REQUIRE(run("simulate consistency --seed 3 --out \"" + dir.string() + "\"").code == 0);
    CHECK(slurp(dir / "outcomes.csv") == a);
}

TEST_CASE("estimate produces one row per unit and intervention", "[cli]") {
    si::ScenarioSpec spec{30, 6, 10, 3, 3, 0.1, si::Scenario::normality_dual, 6, {}, si::WeightLaw::standard_normal};
    const auto panel = si::simulated_panel(si::gen_normality_dual(spec), spec.sigma2, spec.seed);
    const auto dir = scratch() / "estimate";
    fs::create_directories(dir);
    si::write_panel(panel, dir / "outcomes.csv", dir / "assignments.csv");
    const auto r = run("estimate \"" + (dir / "outcomes.csv").string() + "\" -a \"" + (dir / "assignments.csv").string() +
                       "\" --t0 30 --k 3 --out \"" + (dir / "out").string() + "\"");
    REQUIRE(r.code == 0);
    std::istringstream csv(slurp(dir / "out" / "estimates.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2 * 21);
    const auto doc = nlohmann::json::parse(slurp(dir / "out" / "estimates.json"));
    CHECK(doc.is_object());
}
