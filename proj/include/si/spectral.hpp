#pragma once

// Truncated SVD, rank selection and singular-value diagnostics.

#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace si {

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRelativeZero = 1e-12;

struct SpectralDecomposition {
    Vector singular_values;  // descending, length m
    Matrix left_vectors;     // rows x m
    Matrix right_vectors;    // cols x m
    Index rows = 0;
    Index cols = 0;
    Index m = 0;

    double zero_threshold() const noexcept { return m > 0 ? kRelativeZero * singular_values(0) : 0.0; }

    bool is_zero(Index i) const noexcept { return !(singular_values(i) > zero_threshold()); }

    Index numerical_rank() const noexcept {
        Index r = 0;
        while (r < m && !is_zero(r)) ++r;
        return r;
    }

    /// Sum of the top-k rank-one terms.
    Matrix truncate(Index k) const {
        detail::require(k >= 0 && k <= m, "truncation rank out of range");
        return left_vectors.leftCols(k) * singular_values.head(k).asDiagonal() * right_vectors.leftCols(k).transpose();
    }
};

inline SpectralDecomposition decompose(const Eigen::Ref<const Matrix>& matrix) {
    detail::require(matrix.rows() > 0 && matrix.cols() > 0, "decompose: empty matrix");
    detail::require(matrix.allFinite(), "decompose: non-finite input");
    Eigen::BDCSVD<Matrix> svd(matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SpectralDecomposition dec;
    dec.singular_values = svd.singularValues();
    dec.left_vectors = svd.matrixU();
    dec.right_vectors = svd.matrixV();
    dec.rows = matrix.rows();
    dec.cols = matrix.cols();
    dec.m = std::min(matrix.rows(), matrix.cols());
    return dec;
}

enum class RankMethod { elbow, energy, threshold, fixed };

inline const char* to_string(RankMethod m) {
    switch (m) {
        case RankMethod::elbow: return "elbow";
        case RankMethod::energy: return "energy";
        case RankMethod::threshold: return "threshold";
        case RankMethod::fixed: return "fixed";
    }
    return "?";
}

inline RankMethod parse_rank_method(const std::string& s) {
    if (s == "elbow") return RankMethod::elbow;
    if (s == "energy") return RankMethod::energy;
    if (s == "threshold") return RankMethod::threshold;
    if (s == "fixed") return RankMethod::fixed;
    throw InputError("unknown rank method '" + s + "' (expected elbow, energy, threshold or fixed)");
}

struct RankPolicy {
    RankMethod method = RankMethod::energy;
    double energy = 0.99;  // energy method: retained fraction of sum of squared singular values
    double cutoff = 0.0;   // threshold method: keep singular values strictly above this
    Index k = 0;           // fixed method

    static RankPolicy fixed(Index k) { return {RankMethod::fixed, 0.99, 0.0, k}; }
    static RankPolicy energy_fraction(double tau) { return {RankMethod::energy, tau, 0.0, 0}; }
    static RankPolicy elbow() { return {RankMethod::elbow, 0.99, 0.0, 0}; }
    static RankPolicy threshold(double cutoff) { return {RankMethod::threshold, 0.99, cutoff, 0}; }
};

struct RankSelection {
    Index k = 0;
    RankMethod method = RankMethod::energy;
    std::vector<double> energy_fractions;  // entry i: energy share of the top i+1 values
};

/// Cumulative share of squared singular values; the last entry is exactly 1.
inline std::vector<double> energy_fractions(const Vector& singular_values) {
    std::vector<double> out(static_cast<std::size_t>(singular_values.size()), 0.0);
    const double total = singular_values.squaredNorm();
    if (!(total > 0.0)) return out;
    double acc = 0.0;
    for (Index i = 0; i < singular_values.size(); ++i) {
        acc += singular_values(i) * singular_values(i);
        out[static_cast<std::size_t>(i)] = acc / total;
    }
    out.back() = 1.0;
    return out;
}

inline RankSelection select_rank(const SpectralDecomposition& dec, const RankPolicy& policy) {
    if (dec.m == 0 || !(dec.singular_values(0) > 0.0)) throw NumericalError("select_rank: empty spectrum");
    RankSelection sel;
    sel.method = policy.method;
    sel.energy_fractions = energy_fractions(dec.singular_values);
    const auto& s = dec.singular_values;

    switch (policy.method) {
        case RankMethod::elbow: {
            sel.k = 1;
            double best = -1.0;
            for (Index l = 0; l + 1 < dec.m; ++l) {
                if (dec.is_zero(l + 1)) {
                    // exact gap: infinite ratio
                    sel.k = l + 1;
                    break;
                }
                const double ratio = s(l) / s(l + 1);
                if (ratio > best) {
                    best = ratio;
                    sel.k = l + 1;
                }
            }
            break;
        }
        case RankMethod::energy: {
            detail::require(policy.energy > 0.0 && policy.energy <= 1.0, "energy threshold must lie in (0, 1]");
            sel.k = dec.m;
            for (std::size_t i = 0; i < sel.energy_fractions.size(); ++i)
                if (sel.energy_fractions[i] >= policy.energy) {
                    sel.k = static_cast<Index>(i) + 1;
                    break;
                }
            break;
        }
        case RankMethod::threshold: {
            detail::require(policy.cutoff >= 0.0, "threshold cutoff must be non-negative");
            Index count = 0;
            while (count < dec.m && s(count) > policy.cutoff) ++count;
            sel.k = std::max<Index>(count, 1);
            break;
        }
        case RankMethod::fixed: {
            detail::require(policy.k >= 1, "rank must be >= 1");
            detail::require(policy.k <= dec.m, "rank " + std::to_string(policy.k) + " exceeds min(rows, cols) = " +
                                                   std::to_string(dec.m));
            sel.k = policy.k;
            break;
        }
    }
    return sel;
}

/// Half-width C * sigma * (sqrt(rows) + sqrt(cols) + t) of the band that, with
/// probability at least 1 - 2 exp(-t^2), contains every |s_i - s_hat_i|.
inline double singular_value_band(Index rows, Index cols, double sigma, double t, double c = 1.0) {
    detail::require(sigma >= 0.0, "singular_value_band: sigma must be non-negative");
    detail::require(t >= 0.0 && c >= 0.0, "singular_value_band: t and C must be non-negative");
    return c * sigma * (std::sqrt(static_cast<double>(rows)) + std::sqrt(static_cast<double>(cols)) + t);
}

inline double singular_value_band(const SpectralDecomposition& dec, double sigma, double t, double c = 1.0) {
    return singular_value_band(dec.rows, dec.cols, sigma, t, c);
}

}  // namespace si
