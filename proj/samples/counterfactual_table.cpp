// Builds a small synthetic panel with two post-period arms, estimates every
// unit's mean outcome under each arm, and prints the table next to the truth
// for the held-out target column.
#include <si/si.hpp>

#include <cmath>
#include <cstdio>

int main() {
    si::ScenarioSpec spec = si::ScenarioSpec::normality_defaults(2024);
    spec.t0 = 120;
    spec.n_d = 60;
    spec.r = spec.r_pre = 6;
    spec.t1 = 30;

    const si::GroundTruth truth = si::gen_normality_dual(spec);
    const si::ObservedPanel panel = si::simulated_panel(truth, spec.sigma2, spec.seed);

    // Keep singular values above the noise band of the donor pre block.
    si::EstimateOptions opt;
    opt.rank = si::RankPolicy::threshold(si::singular_value_band(spec.t0, spec.n_d, std::sqrt(spec.sigma2), 3.0));
    opt.test_rank = opt.rank;
    opt.run_test = true;
    opt.targets = {panel.num_units() - 1};  // the "target" column
    const si::EstimateTable table = si::estimate_all(panel, opt);

    for (const auto& row : table.rows) {
        if (!row.estimate) continue;
        const auto& e = *row.estimate;
        std::printf("arm %d (%s): theta_hat=%.4f  95%% ci=[%.4f, %.4f]  truth=%.4f  k=%ld  test=%s\n",
                    row.intervention, truth.regime_names[static_cast<std::size_t>(row.intervention)].c_str(),
                    e.theta_hat, e.ci_low, e.ci_high, truth.theta[static_cast<std::size_t>(row.intervention)],
                    static_cast<long>(e.k), row.test && row.test->reject ? "reject" : "retain");
    }
}
