#pragma once

// Principal component regression of a target unit's pre-period outcomes on
// the donor pre-period matrix.

#include <string>

#include "error.hpp"
#include "panel.hpp"
#include "spectral.hpp"
#include "types.hpp"

namespace si {

struct WeightModel {
    Vector weights;  // one per donor, in DonorView order
    Index k = 0;
    Index target_unit = -1;  // -1 when the target is not a panel column
    int intervention = -1;
    double l1_norm = 0.0;
    double l2_norm = 0.0;
};

/// Weights (sum_{l<k} v_l u_l' / s_l) * target_pre from an existing
/// decomposition of the donor pre matrix. Terms with s_l numerically zero are
/// skipped.
inline WeightModel fit_weights(const Vector& target_pre, const SpectralDecomposition& dec, Index k) {
    detail::require(k >= 1, "rank must be >= 1");
    detail::require(k <= dec.m, "rank " + std::to_string(k) + " exceeds min(T0, N_d) = " + std::to_string(dec.m));
    detail::require(target_pre.size() == dec.rows, "target pre-period length " + std::to_string(target_pre.size()) +
                                                       " does not match donor rows " + std::to_string(dec.rows));
    detail::require(target_pre.allFinite(), "target pre-period outcomes must be finite");

    WeightModel model;
    model.k = k;
    model.weights = Vector::Zero(dec.cols);
    Index used = 0;
    for (Index l = 0; l < k; ++l) {
        if (dec.is_zero(l)) continue;
        const double coef = dec.left_vectors.col(l).dot(target_pre) / dec.singular_values(l);
        model.weights.noalias() += coef * dec.right_vectors.col(l);
        ++used;
    }
    if (used == 0) throw NumericalError("all retained singular values are zero");
    model.l1_norm = model.weights.lpNorm<1>();
    model.l2_norm = model.weights.norm();
    return model;
}

inline WeightModel fit_weights(const Vector& target_pre, const DonorView& donors, Index k) {
    return fit_weights(target_pre, decompose(donors.pre), k);
}

/// Projection of w onto the row space of the expected donor pre matrix.
inline Vector projected_truth(const Matrix& expected_pre, const Vector& w) {
    detail::require(expected_pre.cols() == w.size(), "projected_truth: weight length does not match column count");
    detail::require(w.allFinite(), "projected_truth: non-finite weights");
    if (expected_pre.isZero(0.0)) return Vector::Zero(w.size());
    const auto dec = decompose(expected_pre);
    const Index r = dec.numerical_rank();
    const auto basis = dec.right_vectors.leftCols(r);
    return basis * (basis.transpose() * w);
}

/// PCR on the pre-period outcomes stacked on top of K covariate rows.
inline WeightModel fit_with_covariates(const Vector& target_pre, const DonorView& donors, const Vector& target_covariates,
                                       const Matrix& donor_covariates, Index k) {
    const Index K = target_covariates.size();
    detail::require(donor_covariates.rows() == K, "dimension mismatch: " + std::to_string(donor_covariates.rows()) +
                                                      " donor covariate rows vs " + std::to_string(K) +
                                                      " target covariates");
    detail::require(K == 0 || donor_covariates.cols() == donors.size(),
                    "dimension mismatch: donor covariate columns must equal the donor count");
    detail::require(target_pre.size() == donors.pre.rows(), "target pre-period length does not match donor rows");
    if (K == 0) return fit_weights(target_pre, donors, k);

    Matrix stacked(donors.pre.rows() + K, donors.size());
    stacked << donors.pre, donor_covariates;
    Vector target(target_pre.size() + K);
    target << target_pre, target_covariates;
    return fit_weights(target, decompose(stacked), k);
}

}  // namespace si
