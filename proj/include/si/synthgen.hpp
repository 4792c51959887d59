#pragma once

// Seeded generators for the simulation designs: low-rank factor panels with
// controllable subspace inclusion, the elbow demonstration, and a CP-rank
// potential-outcomes tensor for A/B-style donor partitions.
//
// Every latent object draws from its own named stream of the master seed;
// observation noise draws from streams keyed by replicate index, so
// expectations stay fixed while shocks are resampled.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "panel.hpp"
#include "pcr.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "types.hpp"

namespace si {

enum class Scenario { consistency, normality_dual, bias, elbow, custom };
enum class WeightLaw { standard_normal, simplex };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::consistency: return "consistency";
        case Scenario::normality_dual: return "normality_dual";
        case Scenario::bias: return "bias";
        case Scenario::elbow: return "elbow";
        case Scenario::custom: return "custom";
    }
    return "?";
}

inline Scenario parse_scenario(const std::string& s) {
    if (s == "consistency") return Scenario::consistency;
    if (s == "normality_dual" || s == "normality") return Scenario::normality_dual;
    if (s == "bias") return Scenario::bias;
    if (s == "elbow") return Scenario::elbow;
    if (s == "custom") return Scenario::custom;
    throw InputError("unknown scenario '" + s + "' (valid: consistency, normality_dual, bias, elbow, ab)");
}

inline const char* to_string(WeightLaw w) { return w == WeightLaw::standard_normal ? "standard_normal" : "simplex"; }

struct ScenarioSpec {
    Index t0 = 200;
    Index t1 = 200;
    Index n_d = 200;
    Index r = 15;
    Index r_pre = 10;
    double sigma2 = 0.3;
    Scenario scenario = Scenario::consistency;
    std::uint64_t seed = 0;
    std::vector<double> rho_grid;
    WeightLaw weight_law = WeightLaw::standard_normal;

    static std::vector<double> tenths() {
        std::vector<double> g;
        for (int i = 1; i <= 10; ++i) g.push_back(i / 10.0);
        return g;
    }

    static ScenarioSpec consistency_defaults(std::uint64_t seed) {
        return {200, 200, 200, 15, 10, 0.3, Scenario::consistency, seed, tenths(), WeightLaw::standard_normal};
    }
    static ScenarioSpec normality_defaults(std::uint64_t seed) {
        return {400, 20, 400, 15, 15, 0.5, Scenario::normality_dual, seed, {}, WeightLaw::standard_normal};
    }
    static ScenarioSpec bias_defaults(std::uint64_t seed) {
        return {400, 20, 400, 15, 12, 0.5, Scenario::bias, seed, {}, WeightLaw::standard_normal};
    }

    void validate() const {
        detail::require(t0 >= 1 && t1 >= 1 && n_d >= 1 && r >= 1 && r_pre >= 1, "scenario dimensions must be positive");
        detail::require(r_pre <= r, "scenario requires r_pre <= r");
        detail::require(sigma2 >= 0.0 && std::isfinite(sigma2), "sigma2 must be finite and non-negative");
        for (double rho : rho_grid) detail::require(rho > 0.0 && rho <= 1.0, "rho grid values must lie in (0, 1]");
    }
};

inline nlohmann::json to_json(const ScenarioSpec& s) {
    return {{"scenario", to_string(s.scenario)},
            {"t0", s.t0},
            {"t1", s.t1},
            {"n_d", s.n_d},
            {"r", s.r},
            {"r_pre", s.r_pre},
            {"sigma2", s.sigma2},
            {"seed", s.seed},
            {"rho_grid", s.rho_grid},
            {"weight_law", to_string(s.weight_law)},
            {"generator", std::string(rng::kGeneratorName)}};
}

struct GroundTruth {
    Matrix expected_pre;                 // T0 x N_d
    Vector expected_target_pre;          // T0
    std::vector<Matrix> expected_post;   // one T1 x N_d block per post regime
    std::vector<std::string> regime_names;
    Vector w_true;
    Vector w_tilde;
    std::vector<double> theta;  // per regime, over all T1 rows
    Matrix u_pre;
    std::vector<Matrix> u_post;
    Matrix v;
    Index rank_pre = 0;
    Index rank = 0;

    /// Target mean over the first `rows` post periods of a regime.
    double theta_prefix(std::size_t regime, Index rows) const {
        detail::require(rows >= 1 && rows <= expected_post.at(regime).rows(), "theta_prefix: row count out of range");
        return (expected_post[regime].topRows(rows) * w_true).sum() / static_cast<double>(rows);
    }
};

/// Noisy outcomes for one replicate.
struct Observation {
    Vector target_pre;
    Matrix donors_pre;
    std::vector<Matrix> donors_post;
};

/// Number of post rows used for fraction rho of T1 (floored).
inline Index prefix_rows(double rho, Index t1) {
    const auto rows = static_cast<Index>(std::floor(rho * static_cast<double>(t1) + 1e-9));
    detail::require(rows >= 1, "rho * T1 must cover at least one post period");
    return std::min(rows, t1);
}

inline Observation observe(const GroundTruth& truth, double sigma2, std::uint64_t seed, std::uint64_t replicate) {
    detail::require(sigma2 >= 0.0, "sigma2 must be non-negative");
    const double sd = std::sqrt(sigma2);
    Observation obs;
    obs.target_pre = truth.expected_target_pre;
    obs.donors_pre = truth.expected_pre;
    if (sd > 0.0) {
        Vector e(obs.target_pre.size());
        rng::Stream target(seed, "noise/target_pre", replicate);
        rng::fill_normal(e, target, sd);
        obs.target_pre += e;
        Matrix E(obs.donors_pre.rows(), obs.donors_pre.cols());
        rng::Stream pre(seed, "noise/donors_pre", replicate);
        rng::fill_normal(E, pre, sd);
        obs.donors_pre += E;
    }
    for (std::size_t g = 0; g < truth.expected_post.size(); ++g) {
        Matrix post = truth.expected_post[g];
        if (sd > 0.0) {
            Matrix E(post.rows(), post.cols());
            rng::Stream s(seed, "noise/donors_post", replicate, g);
            rng::fill_normal(E, s, sd);
            post += E;
        }
        obs.donors_post.push_back(std::move(post));
    }
    return obs;
}

/// One noisy draw laid out as a panel. Each post regime g contributes a copy
/// of the N_d donors (same pre rows, regime-g post rows) assigned to
/// intervention g; the last column is the target, assigned to intervention 0,
/// whose post rows follow regime 0.
inline ObservedPanel simulated_panel(const GroundTruth& truth, double sigma2, std::uint64_t seed) {
    const Observation obs = observe(truth, sigma2, seed, 0);
    const Index t0 = obs.donors_pre.rows();
    const Index n_d = obs.donors_pre.cols();
    const auto regimes = static_cast<Index>(obs.donors_post.size());
    const Index t1 = regimes > 0 ? obs.donors_post.front().rows() : 0;
    detail::require(regimes >= 1 && t1 >= 1, "panel export needs at least one post regime");

    Matrix outcomes(t0 + t1, regimes * n_d + 1);
    std::vector<int> assign;
    std::vector<std::string> labels;
    for (Index g = 0; g < regimes; ++g) {
        outcomes.block(0, g * n_d, t0, n_d) = obs.donors_pre;
        outcomes.block(t0, g * n_d, t1, n_d) = obs.donors_post[static_cast<std::size_t>(g)];
        for (Index n = 0; n < n_d; ++n) {
            assign.push_back(static_cast<int>(g));
            labels.push_back("d" + std::to_string(g) + "_donor" + std::to_string(n));
        }
    }
    Vector target_post = truth.expected_post.front() * truth.w_true;
    if (sigma2 > 0.0) {
        Vector e(t1);
        rng::Stream s(seed, "noise/target_post", 0);
        rng::fill_normal(e, s, std::sqrt(sigma2));
        target_post += e;
    }
    outcomes.col(regimes * n_d) << obs.target_pre, target_post;
    assign.push_back(0);
    labels.push_back("target");
    return ObservedPanel(std::move(outcomes), t0, std::move(assign), static_cast<int>(regimes), std::move(labels));
}

namespace detail {

inline Matrix normal_matrix(Index rows, Index cols, std::uint64_t seed, const char* label) {
    Matrix m(rows, cols);
    rng::Stream s(seed, label);
    rng::fill_normal(m, s);
    return m;
}

inline Matrix uniform_matrix(Index rows, Index cols, std::uint64_t seed, const char* label, double lo, double hi) {
    Matrix m(rows, cols);
    rng::Stream s(seed, label);
    rng::fill_uniform(m, s, lo, hi);
    return m;
}

inline Vector draw_weights(Index n, WeightLaw law, std::uint64_t seed) {
    Vector w(n);
    rng::Stream s(seed, "weights");
    if (law == WeightLaw::standard_normal) {
        rng::fill_normal(w, s);
        return w;
    }
    // Uniform on the simplex: normalized unit exponentials.
    for (Index i = 0; i < n; ++i) w(i) = -std::log(1.0 - s.uniform());
    const double total = w.sum();
    if (!(total > 0.0)) throw NumericalError("degenerate simplex draw");
    return w / total;
}

/// [A, A Q] with A ~ N(0,1) of size t0 x r_pre and Q uniform with columns
/// normalized to sum to one; rank r_pre almost surely.
inline Matrix mixed_pre_factors(Index t0, Index r, Index r_pre, std::uint64_t seed) {
    Matrix a = normal_matrix(t0, r_pre, seed, "factors/A");
    Matrix out(t0, r);
    out.leftCols(r_pre) = a;
    if (r > r_pre) {
        Matrix q = uniform_matrix(r_pre, r - r_pre, seed, "factors/Q", 0.0, 1.0);
        for (Index j = 0; j < q.cols(); ++j) {
            const double total = q.col(j).sum();
            if (!(total > 0.0)) throw NumericalError("all-zero column in mixing matrix Q");
            q.col(j) /= total;
        }
        out.rightCols(r - r_pre) = a * q;
    }
    return out;
}

inline void finish_truth(GroundTruth& truth, WeightLaw law, std::uint64_t seed) {
    truth.expected_pre = truth.u_pre * truth.v.transpose();
    truth.w_true = draw_weights(truth.v.rows(), law, seed);
    truth.expected_target_pre = truth.expected_pre * truth.w_true;
    truth.w_tilde = projected_truth(truth.expected_pre, truth.w_true);
    truth.expected_post.clear();
    truth.theta.clear();
    for (const auto& u : truth.u_post) {
        truth.expected_post.push_back(u * truth.v.transpose());
        truth.theta.push_back((truth.expected_post.back() * truth.w_true).sum() /
                              static_cast<double>(truth.expected_post.back().rows()));
    }
}

}  // namespace detail

/// Regimes: "inclusion" (post factors P U_pre, P row-stochastic) and
/// "violating" (post factors standard normal of full rank r).
inline GroundTruth gen_consistency(const ScenarioSpec& spec) {
    spec.validate();
    detail::require(spec.r_pre < spec.r, "consistency scenario requires r_pre < r");
    GroundTruth truth;
    truth.rank = spec.r;
    truth.rank_pre = spec.r_pre;
    truth.v = detail::normal_matrix(spec.n_d, spec.r, spec.seed, "factors/V");
    truth.u_pre = detail::mixed_pre_factors(spec.t0, spec.r, spec.r_pre, spec.seed);

    Matrix p = detail::uniform_matrix(spec.t1, spec.t0, spec.seed, "factors/P", 0.0, 1.0);
    for (Index i = 0; i < p.rows(); ++i) {
        const double total = p.row(i).sum();
        if (!(total > 0.0)) throw NumericalError("all-zero row in mixing matrix P");
        p.row(i) /= total;
    }
    truth.u_post.push_back(p * truth.u_pre);
    truth.u_post.push_back(detail::normal_matrix(spec.t1, spec.r, spec.seed, "factors/F"));
    truth.regime_names = {"inclusion", "violating"};
    detail::finish_truth(truth, spec.weight_law, spec.seed);
    return truth;
}

/// Shared pre data; regime 0 has standard-normal post factors and regime 1
/// uniform on [-sqrt 3, sqrt 3] (unit variance).
inline GroundTruth gen_normality_dual(const ScenarioSpec& spec) {
    spec.validate();
    GroundTruth truth;
    truth.rank = spec.r;
    truth.rank_pre = spec.r;
    truth.v = detail::normal_matrix(spec.n_d, spec.r, spec.seed, "factors/V");
    truth.u_pre = detail::normal_matrix(spec.t0, spec.r, spec.seed, "factors/U_pre");
    truth.u_post.push_back(detail::normal_matrix(spec.t1, spec.r, spec.seed, "factors/U_post0"));
    truth.u_post.push_back(
        detail::uniform_matrix(spec.t1, spec.r, spec.seed, "factors/U_post1", -std::sqrt(3.0), std::sqrt(3.0)));
    truth.regime_names = {"d0_normal", "d1_uniform"};
    detail::finish_truth(truth, spec.weight_law, spec.seed);
    return truth;
}

/// Pre data of rank r_pre < r as in the consistency design; post factors
/// standard normal of full rank r, so inclusion fails.
inline GroundTruth gen_bias(const ScenarioSpec& spec) {
    spec.validate();
    detail::require(spec.r_pre < spec.r, "bias scenario requires r_pre < r");
    GroundTruth truth;
    truth.rank = spec.r;
    truth.rank_pre = spec.r_pre;
    truth.v = detail::normal_matrix(spec.n_d, spec.r, spec.seed, "factors/V");
    truth.u_pre = detail::mixed_pre_factors(spec.t0, spec.r, spec.r_pre, spec.seed);
    truth.u_post.push_back(detail::normal_matrix(spec.t1, spec.r, spec.seed, "factors/U_post"));
    truth.regime_names = {"violating"};
    detail::finish_truth(truth, spec.weight_law, spec.seed);
    return truth;
}

inline GroundTruth generate(const ScenarioSpec& spec) {
    switch (spec.scenario) {
        case Scenario::consistency: return gen_consistency(spec);
        case Scenario::normality_dual: return gen_normality_dual(spec);
        case Scenario::bias: return gen_bias(spec);
        default: throw InputError(std::string("no panel generator for scenario ") + to_string(spec.scenario));
    }
}

/// Two-block design for test calibration: latent unit factors V = [V_a, V_b].
/// Pre outcomes load on V_a only (rank r_pre). With `inclusion` the post
/// outcomes load on V_a as well; otherwise they load on V_b only (rank r_post).
struct SubspaceDesign {
    Index t0 = 200;
    Index t1 = 200;
    Index n_d = 200;
    Index r_pre = 5;
    Index r_post = 5;
    double sigma2 = 0.01;
    bool inclusion = true;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const SubspaceDesign& s) {
    return {{"t0", s.t0},         {"t1", s.t1},         {"n_d", s.n_d},
            {"r_pre", s.r_pre},   {"r_post", s.r_post}, {"sigma2", s.sigma2},
            {"inclusion", s.inclusion}, {"seed", s.seed}, {"generator", std::string(rng::kGeneratorName)}};
}

inline GroundTruth gen_subspace_design(const SubspaceDesign& design) {
    detail::require(design.t0 >= 1 && design.t1 >= 1 && design.n_d >= 1 && design.r_pre >= 1 && design.r_post >= 1,
                    "design dimensions must be positive");
    detail::require(!design.inclusion || design.r_post <= design.r_pre, "inclusion design needs r_post <= r_pre");
    const Index r = design.inclusion ? design.r_pre : design.r_pre + design.r_post;
    GroundTruth truth;
    truth.rank = r;
    truth.rank_pre = design.r_pre;
    truth.v = detail::normal_matrix(design.n_d, r, design.seed, "factors/V");
    truth.u_pre = Matrix::Zero(design.t0, r);
    truth.u_pre.leftCols(design.r_pre) = detail::normal_matrix(design.t0, design.r_pre, design.seed, "factors/U_pre");
    Matrix u_post = Matrix::Zero(design.t1, r);
    const Matrix b = detail::normal_matrix(design.t1, design.r_post, design.seed, "factors/U_post");
    if (design.inclusion)
        u_post.leftCols(design.r_post) = b;
    else
        u_post.rightCols(design.r_post) = b;
    truth.u_post.push_back(std::move(u_post));
    truth.regime_names = {design.inclusion ? "inclusion" : "disjoint"};
    detail::finish_truth(truth, WeightLaw::simplex, design.seed);
    return truth;
}

struct ElbowSpectra {
    std::vector<double> sigma2_grid;
    std::vector<Vector> spectra;  // one per grid point, descending
};

/// Spectra of U V' + sigma E with U, V (dim x r) and E (dim x dim) standard
/// normal; E is shared across grid points.
inline ElbowSpectra gen_elbow(Index dim, Index r, const std::vector<double>& sigma2_grid, std::uint64_t seed) {
    detail::require(dim >= 1 && r >= 1 && r <= dim, "elbow demo requires 1 <= r <= dim");
    const Matrix u = detail::normal_matrix(dim, r, seed, "elbow/U");
    const Matrix v = detail::normal_matrix(dim, r, seed, "elbow/V");
    const Matrix e = detail::normal_matrix(dim, dim, seed, "elbow/E");
    const Matrix signal = u * v.transpose();
    ElbowSpectra out;
    out.sigma2_grid = sigma2_grid;
    for (double s2 : sigma2_grid) {
        detail::require(s2 >= 0.0, "sigma2 must be non-negative");
        out.spectra.push_back(decompose(signal + std::sqrt(s2) * e).singular_values);
    }
    return out;
}

struct AbSpec {
    Index n_units = 25;
    Index n_periods = 8;  // per phase; the panel has 2 * n_periods rows
    int interventions = 4;
    Index rank = 2;
    double heterogeneity = 1.0;
    double sigma2 = 0.1;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const AbSpec& s) {
    return {{"n_units", s.n_units},   {"n_periods", s.n_periods},         {"interventions", s.interventions},
            {"rank", s.rank},         {"heterogeneity", s.heterogeneity}, {"sigma2", s.sigma2},
            {"seed", s.seed},         {"generator", std::string(rng::kGeneratorName)}};
}

/// Potential outcomes Y^(d)_tn = sum_l u_tl v_nl lambda_dl + noise over the
/// same n_periods measurement times for every intervention. Unit factors are
/// 1 + heterogeneity * N(0,1), so heterogeneity 0 makes all units identical.
struct AbData {
    AbSpec spec;
    std::vector<Matrix> expected;  // per intervention, n_periods x n_units
    std::vector<Matrix> observed;  // one fixed noisy realization
    Matrix theta;                  // n_units x interventions
    Matrix u, v, lambda;
};

inline AbData gen_ab_data(const AbSpec& spec) {
    detail::require(spec.n_units >= 1 && spec.n_periods >= 1 && spec.rank >= 1, "A/B dimensions must be positive");
    detail::require(spec.interventions >= 2, "A/B study needs at least two interventions");
    detail::require(spec.heterogeneity >= 0.0 && spec.sigma2 >= 0.0, "heterogeneity and sigma2 must be non-negative");
    AbData data;
    data.spec = spec;
    data.u = detail::normal_matrix(spec.n_periods, spec.rank, spec.seed, "ab/U");
    data.u.col(0).array() += 3.0;
    data.v = Matrix::Ones(spec.n_units, spec.rank) +
             spec.heterogeneity * detail::normal_matrix(spec.n_units, spec.rank, spec.seed, "ab/V");
    data.lambda = detail::uniform_matrix(spec.interventions, spec.rank, spec.seed, "ab/lambda", 0.5, 1.5);
    data.lambda.row(0).setOnes();
    data.theta.resize(spec.n_units, spec.interventions);
    const double sd = std::sqrt(spec.sigma2);
    for (int d = 0; d < spec.interventions; ++d) {
        Matrix e = data.u * data.lambda.row(d).asDiagonal() * data.v.transpose();
        data.theta.col(d) = e.colwise().mean().transpose();
        Matrix noise(spec.n_periods, spec.n_units);
        rng::Stream s(spec.seed, "ab/noise", static_cast<std::uint64_t>(d));
        rng::fill_normal(noise, s, sd);
        data.observed.push_back(e + noise);
        data.expected.push_back(std::move(e));
    }
    return data;
}

/// Contiguous clusters over a unit ordering: intervention d (1..D-1) gets the
/// d-th block of N/(D-1) units; the last block absorbs the remainder.
inline std::vector<int> cluster_assignments(const std::vector<Index>& order, int interventions) {
    const Index n = static_cast<Index>(order.size());
    const Index clusters = interventions - 1;
    detail::require(clusters >= 1 && n >= clusters, "need at least one unit per treated cluster");
    const Index base = n / clusters;
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
        const Index c = std::min(i / base, clusters - 1);
        assign[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = static_cast<int>(c) + 1;
    }
    return assign;
}

/// Panel with control outcomes in the pre period and each unit's assigned
/// intervention in the post period.
inline ObservedPanel ab_panel(const AbData& data, const std::vector<int>& assignments) {
    const Index t = data.spec.n_periods;
    Matrix outcomes(2 * t, data.spec.n_units);
    for (Index n = 0; n < data.spec.n_units; ++n) {
        const int d = assignments.at(static_cast<std::size_t>(n));
        detail::require(d >= 0 && d < data.spec.interventions, "assignment id out of range");
        outcomes.col(n).head(t) = data.observed[0].col(n);
        outcomes.col(n).tail(t) = data.observed[static_cast<std::size_t>(d)].col(n);
    }
    return ObservedPanel(std::move(outcomes), t, assignments, data.spec.interventions);
}

/// Default partition (identity ordering).
inline ObservedPanel gen_ab_panel(const AbData& data) {
    std::vector<Index> order(static_cast<std::size_t>(data.spec.n_units));
    for (Index i = 0; i < data.spec.n_units; ++i) order[static_cast<std::size_t>(i)] = i;
    return ab_panel(data, cluster_assignments(order, data.spec.interventions));
}

}  // namespace si
