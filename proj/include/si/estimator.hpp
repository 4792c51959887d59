#pragma once

// Point estimates, noise-variance estimates and confidence intervals for the
// counterfactual post-period mean of a target unit under an intervention.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "panel.hpp"
#include "parallel.hpp"
#include "pcr.hpp"
#include "spectral.hpp"
#include "stats.hpp"
#include "subspace_test.hpp"
#include "types.hpp"

namespace si {

struct SIEstimate {
    double theta_hat = 0.0;
    double sigma2_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double alpha_ci = 0.05;
    double weight_l2 = 0.0;
    Index t1 = 0;
    Index k = 0;
};

/// Mean over post periods of post * weights.
inline double estimate_theta(const Vector& weights, const Matrix& post) {
    detail::require(post.rows() >= 1, "empty post period");
    detail::require(post.cols() == weights.size(), "weight length does not match donor count");
    return (post * weights).sum() / static_cast<double>(post.rows());
}

inline double estimate_theta(const WeightModel& model, const DonorView& donors) {
    return estimate_theta(model.weights, donors.post);
}

/// (1/T0) || target_pre - pre * weights ||^2.
inline double estimate_noise_variance(const WeightModel& model, const Vector& target_pre, const DonorView& donors) {
    detail::require(target_pre.size() == donors.pre.rows(), "target pre-period length does not match donor rows");
    detail::require(model.weights.size() == donors.pre.cols(), "weight length does not match donor count");
    return (target_pre - donors.pre * model.weights).squaredNorm() / static_cast<double>(donors.pre.rows());
}

/// theta_hat -/+ z_{1-alpha/2} * sigma_hat * ||w||_2 / sqrt(T1).
inline std::pair<double, double> confidence_interval(double theta_hat, double sigma2_hat, double weight_l2, Index t1,
                                                     double alpha_ci) {
    detail::require(alpha_ci > 0.0 && alpha_ci < 1.0, "invalid alpha: confidence level alpha must lie in (0, 1)");
    detail::require(t1 >= 1, "confidence interval needs T1 >= 1");
    detail::require(sigma2_hat >= 0.0 && weight_l2 >= 0.0, "variance and weight norm must be non-negative");
    const double z = stats::normal_quantile(1.0 - alpha_ci / 2.0);
    const double half = z * std::sqrt(sigma2_hat) * weight_l2 / std::sqrt(static_cast<double>(t1));
    return {theta_hat - half, theta_hat + half};
}

/// Full pipeline for one (target, donor group) pair with a known rank.
inline SIEstimate estimate_pair(const Vector& target_pre, const DonorView& donors, const SpectralDecomposition& pre_dec,
                                Index k, double alpha_ci) {
    const auto model = fit_weights(target_pre, pre_dec, k);
    SIEstimate est;
    est.k = k;
    est.alpha_ci = alpha_ci;
    est.t1 = donors.post.rows();
    est.theta_hat = estimate_theta(model, donors);
    est.sigma2_hat = estimate_noise_variance(model, target_pre, donors);
    est.weight_l2 = model.l2_norm;
    std::tie(est.ci_low, est.ci_high) =
        confidence_interval(est.theta_hat, est.sigma2_hat, est.weight_l2, est.t1, alpha_ci);
    return est;
}

/// Noise level for testing donor group d: the root mean of the PCR residual
/// variances of every unit outside the group regressed on the group (members
/// regressed on the remaining members when nobody is outside).
inline double pooled_sigma_hat(const ObservedPanel& panel, int d, const RankPolicy& policy) {
    const DonorView group = donor_view(panel, d);
    const auto dec = decompose(group.pre);
    const Index k = select_rank(dec, policy).k;
    double total = 0.0;
    Index count = 0;
    for (Index n = 0; n < panel.num_units(); ++n) {
        if (panel.assignment(n) == d) continue;
        const Vector target = panel.pre_column(n);
        total += estimate_noise_variance(fit_weights(target, dec, k), target, group);
        ++count;
    }
    if (count == 0) {
        detail::require(group.size() >= 2, "cannot estimate sigma: donor group " + std::to_string(d) +
                                               " has one unit and no other units exist");
        for (Index n : group.donor_indices) {
            const DonorView rest = donor_view_excluding(panel, d, n);
            const auto rest_dec = decompose(rest.pre);
            const Vector target = panel.pre_column(n);
            const Index kr = select_rank(rest_dec, policy).k;
            total += estimate_noise_variance(fit_weights(target, rest_dec, kr), target, rest);
            ++count;
        }
    }
    return std::sqrt(total / static_cast<double>(count));
}

struct EstimateOptions {
    RankPolicy rank;  // weights; default energy 0.99
    double alpha_ci = 0.05;
    bool run_test = false;
    double test_alpha = 0.05;
    double c_constant = kGaussianC;
    std::optional<double> sigma_override;
    std::optional<double> heuristic_rho;
    RankPolicy test_rank;           // r_pre and r_post for the subspace test
    std::vector<Index> targets;     // empty: every unit
    int jobs = 1;
};

struct EstimateRow {
    Index unit = 0;
    int intervention = 0;
    bool observed = false;  // intervention == assignment(unit); donors exclude the unit itself
    std::optional<SIEstimate> estimate;  // empty if no donor remains
    std::optional<double> observed_post_mean;
    std::optional<SubspaceTestResult> test;
    std::vector<Index> donors;
    Vector weights;
};

struct EstimateTable {
    std::vector<EstimateRow> rows;          // ordered by (unit, intervention)
    std::vector<int> skipped_interventions;  // interventions with no donors
};

/// Estimates for every (unit, intervention) pair. Pairs whose intervention is
/// the unit's own post-period assignment use the other members of that group
/// as donors and also report the raw post-period mean.
inline EstimateTable estimate_all(const ObservedPanel& panel, const EstimateOptions& opt) {
    detail::require(opt.alpha_ci > 0.0 && opt.alpha_ci < 1.0, "invalid alpha: confidence level alpha must lie in (0, 1)");
    if (opt.heuristic_rho) detail::require(*opt.heuristic_rho > 0.0 && *opt.heuristic_rho < 1.0, "rho must lie in (0, 1)");

    std::vector<Index> targets = opt.targets;
    if (targets.empty())
        for (Index n = 0; n < panel.num_units(); ++n) targets.push_back(n);
    for (Index n : targets) detail::require(n >= 0 && n < panel.num_units(), "target unit out of range");

    EstimateTable table;
    struct Group {
        std::optional<DonorView> view;
        std::optional<SpectralDecomposition> pre, post;
    };
    std::vector<Group> groups(static_cast<std::size_t>(panel.num_interventions()));
    for (int d = 0; d < panel.num_interventions(); ++d) {
        auto members = panel.donor_group(d);
        if (members.empty()) {
            table.skipped_interventions.push_back(d);
            continue;
        }
        auto& g = groups[static_cast<std::size_t>(d)];
        g.view = make_donor_view(panel, std::move(members));
        g.pre = decompose(g.view->pre);
        if (opt.run_test) g.post = decompose(g.view->post);
    }

    for (Index n : targets)
        for (int d = 0; d < panel.num_interventions(); ++d) {
            if (!groups[static_cast<std::size_t>(d)].view) continue;
            EstimateRow row;
            row.unit = n;
            row.intervention = d;
            row.observed = panel.assignment(n) == d;
            table.rows.push_back(std::move(row));
        }

    parallel_for(static_cast<Index>(table.rows.size()), opt.jobs, [&](Index i) {
        auto& row = table.rows[static_cast<std::size_t>(i)];
        const auto& g = groups[static_cast<std::size_t>(row.intervention)];
        const Vector target_pre = panel.pre_column(row.unit);

        std::optional<DonorView> own;
        std::optional<SpectralDecomposition> own_pre, own_post;
        const DonorView* donors = &*g.view;
        const SpectralDecomposition* pre_dec = &*g.pre;
        const SpectralDecomposition* post_dec = g.post ? &*g.post : nullptr;
        if (row.observed) {
            row.observed_post_mean = panel.post_column(row.unit).mean();
            if (g.view->size() == 1) return;
            own = donor_view_excluding(panel, row.intervention, row.unit);
            own_pre = decompose(own->pre);
            donors = &*own;
            pre_dec = &*own_pre;
            if (opt.run_test) {
                own_post = decompose(own->post);
                post_dec = &*own_post;
            }
        }

        const Index k = select_rank(*pre_dec, opt.rank).k;
        const auto model = fit_weights(target_pre, *pre_dec, k);
        SIEstimate est;
        est.k = k;
        est.alpha_ci = opt.alpha_ci;
        est.t1 = donors->post.rows();
        est.theta_hat = estimate_theta(model, *donors);
        est.sigma2_hat = estimate_noise_variance(model, target_pre, *donors);
        est.weight_l2 = model.l2_norm;
        std::tie(est.ci_low, est.ci_high) =
            confidence_interval(est.theta_hat, est.sigma2_hat, est.weight_l2, est.t1, opt.alpha_ci);
        row.estimate = est;
        row.donors = donors->donor_indices;
        row.weights = model.weights;

        if (opt.run_test) {
            if (opt.heuristic_rho) {
                row.test = heuristic_test(*pre_dec, *post_dec, *opt.heuristic_rho, opt.test_rank, opt.test_rank);
            } else {
                const double sigma = opt.sigma_override.value_or(std::sqrt(est.sigma2_hat));
                row.test = run_test(*pre_dec, *post_dec, opt.test_alpha, sigma, opt.c_constant, opt.test_rank,
                                    opt.test_rank);
            }
        }
    });
    return table;
}

}  // namespace si
