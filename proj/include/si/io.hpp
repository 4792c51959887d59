#pragma once

// JSON and CSV views of estimator and test results.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "estimator.hpp"
#include "panel.hpp"
#include "spectral.hpp"
#include "subspace_test.hpp"
#include "synthgen.hpp"

namespace si {

inline nlohmann::json to_json(const RankPolicy& p) {
    nlohmann::json j{{"method", to_string(p.method)}};
    switch (p.method) {
        case RankMethod::energy: j["energy"] = p.energy; break;
        case RankMethod::threshold: j["cutoff"] = p.cutoff; break;
        case RankMethod::fixed: j["k"] = p.k; break;
        case RankMethod::elbow: break;
    }
    return j;
}

inline nlohmann::json to_json(const SubspaceTestResult& r) {
    nlohmann::json j{{"mode", to_string(r.mode)},
                     {"tau_hat", r.tau_hat},
                     {"tau_alpha", r.tau_alpha},
                     {"reject", r.reject},
                     {"decision", r.reject ? "reject" : "retain"},
                     {"r_pre", r.r_pre},
                     {"r_post", r.r_post},
                     {"s_rpre", r.s_rpre},
                     {"varsigma_rpost", r.varsigma_rpost}};
    if (r.mode == TestMode::exact) {
        j["alpha"] = r.alpha;
        j["sigma_used"] = r.sigma_used;
        j["c_constant"] = r.c_constant;
    } else {
        j["rho"] = *r.rho;
    }
    return j;
}

inline nlohmann::json to_json(const SIEstimate& e) {
    return {{"theta_hat", e.theta_hat}, {"sigma2_hat", e.sigma2_hat}, {"ci_low", e.ci_low},
            {"ci_high", e.ci_high},     {"alpha_ci", e.alpha_ci},     {"weight_l2", e.weight_l2},
            {"t1", e.t1},               {"k", e.k}};
}

inline nlohmann::json to_json(const EstimateTable& table, const ObservedPanel& panel) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json j{{"unit", panel.unit_labels()[static_cast<std::size_t>(r.unit)]},
                         {"intervention", r.intervention},
                         {"observed", r.observed}};
        j["estimate"] = r.estimate ? to_json(*r.estimate) : nlohmann::json(nullptr);
        if (r.observed_post_mean) j["observed_post_mean"] = *r.observed_post_mean;
        if (r.test) j["test"] = to_json(*r.test);
        std::vector<std::string> donors;
        for (Index d : r.donors) donors.push_back(panel.unit_labels()[static_cast<std::size_t>(d)]);
        j["donors"] = donors;
        j["weights"] = std::vector<double>(r.weights.data(), r.weights.data() + r.weights.size());
        rows.push_back(std::move(j));
    }
    return {{"rows", rows}, {"skipped_interventions", table.skipped_interventions}};
}

/// One line per (unit, intervention) with an estimate or an observed mean.
inline void write_estimate_csv(const EstimateTable& table, const ObservedPanel& panel,
                               const std::filesystem::path& path) {
    std::vector<csv::Row> rows{{"unit", "intervention", "observed", "theta_hat", "ci_low", "ci_high", "sigma2_hat", "k",
                                "weight_l2", "observed_post_mean", "tau_hat", "tau_alpha", "test_decision"}};
    auto num = [](const std::optional<double>& x) { return x ? csv::format_double(*x) : std::string(); };
    for (const auto& r : table.rows) {
        const auto& e = r.estimate;
        rows.push_back({panel.unit_labels()[static_cast<std::size_t>(r.unit)], std::to_string(r.intervention),
                        r.observed ? "1" : "0", e ? csv::format_double(e->theta_hat) : "",
                        e ? csv::format_double(e->ci_low) : "", e ? csv::format_double(e->ci_high) : "",
                        e ? csv::format_double(e->sigma2_hat) : "", e ? std::to_string(e->k) : "",
                        e ? csv::format_double(e->weight_l2) : "", num(r.observed_post_mean),
                        r.test ? csv::format_double(r.test->tau_hat) : "",
                        r.test ? csv::format_double(r.test->tau_alpha) : "",
                        r.test ? (r.test->reject ? "reject" : "retain") : ""});
    }
    csv::write_rows(path, rows);
}

inline void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
    std::vector<csv::Row> rows;
    for (Index i = 0; i < m.rows(); ++i) {
        csv::Row row;
        for (Index j = 0; j < m.cols(); ++j) row.push_back(csv::format_double(m(i, j)));
        rows.push_back(std::move(row));
    }
    csv::write_rows(path, rows);
}

inline nlohmann::json truth_json(const GroundTruth& t) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"regimes", t.regime_names}, {"theta", t.theta},   {"w_true", vec(t.w_true)},
            {"w_tilde", vec(t.w_tilde)}, {"rank", t.rank},     {"rank_pre", t.rank_pre}};
}

}  // namespace si
