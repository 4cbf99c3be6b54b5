#pragma once

// Standardization bookkeeping. Columns are centered and divided by sqrt(n)*s
// (population sd), which yields unit l2 norm; the (m, s) pair is refreshed
// every iteration so that scaling tracks the current imputations.

#include <cmath>

#include "abslope/types.hpp"

namespace abslope {

struct StandardizedData {
    Dataset data;       // X fully imputed and standardized, y centered
    ScalingInfo scaling;
};

struct RescaledMatrix {
    MatrixXd X;
    ScalingInfo scaling;
};

namespace detail {

inline void column_moments(const MatrixXd& X, VectorXd& m, VectorXd& s) {
    const Index n = X.rows();
    m = X.colwise().mean();
    s.resize(X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
        s[j] = std::sqrt((X.col(j).array() - m[j]).square().sum() / static_cast<double>(n));
    }
}

} // namespace detail

/// Mean-imputes missing cells, centers and scales every column to unit l2
/// norm, and centers the response. The returned ScalingInfo holds the means
/// and sds of the imputed (unscaled) matrix.
inline StandardizedData initial_standardize(const Dataset& input) {
    input.validate();
    const Index n = input.n();
    const Index p = input.p();

    StandardizedData out;
    out.data = input;
    MatrixXd& X = out.data.X;

    for (Index j = 0; j < p; ++j) {
        double sum = 0.0;
        Index observed = 0;
        for (Index i = 0; i < n; ++i) {
            if (!input.mask(i, j)) {
                sum += X(i, j);
                ++observed;
            }
        }
        if (observed < 2) {
            throw UnusableColumnError(j, "fewer than two observed values");
        }
        const double mean = sum / static_cast<double>(observed);
        double ss = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (!input.mask(i, j)) {
                ss += (X(i, j) - mean) * (X(i, j) - mean);
            } else {
                X(i, j) = mean;
            }
        }
        if (!(ss > 0.0)) {
            throw UnusableColumnError(j, "observed values have zero variance");
        }
    }

    VectorXd m, s;
    detail::column_moments(X, m, s);
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < p; ++j) {
        if (!(s[j] > 0.0)) throw UnusableColumnError(j, "zero standard deviation");
        X.col(j) = (X.col(j).array() - m[j]) / (sqrt_n * s[j]);
    }

    out.scaling.m = std::move(m);
    out.scaling.s = std::move(s);
    out.scaling.y_mean = input.y.mean();
    out.data.y = input.y.array() - out.scaling.y_mean;
    out.data.centered = true;
    return out;
}

/// Refreshes the scaling after an imputation update: reverses the previous
/// scaling, recomputes column means/sds on the current imputations, and
/// re-standardizes.
inline RescaledMatrix rescale_iteration(const MatrixXd& X_imputed, const ScalingInfo& scaling) {
    const Index n = X_imputed.rows();
    const Index p = X_imputed.cols();
    if (scaling.m.size() != p || scaling.s.size() != p) {
        throw std::invalid_argument("rescale_iteration: scaling dimensions do not match the matrix");
    }

    const double sqrt_n = std::sqrt(static_cast<double>(n));
    MatrixXd unscaled(n, p);
    for (Index j = 0; j < p; ++j) {
        unscaled.col(j) = (sqrt_n * scaling.s[j]) * X_imputed.col(j).array() + scaling.m[j];
    }

    RescaledMatrix out;
    detail::column_moments(unscaled, out.scaling.m, out.scaling.s);
    out.scaling.y_mean = scaling.y_mean;
    out.X.resize(n, p);
    for (Index j = 0; j < p; ++j) {
        if (!(out.scaling.s[j] > 0.0)) throw UnusableColumnError(j, "zero standard deviation");
        out.X.col(j) = (unscaled.col(j).array() - out.scaling.m[j]) / (sqrt_n * out.scaling.s[j]);
    }
    return out;
}

} // namespace abslope
