#pragma once

// Prediction for incomplete rows by Monte-Carlo marginalization over the
// missing covariates. At prediction time the response is unknown, so the
// imputation distribution conditions on the observed covariates only.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "abslope/rng.hpp"
#include "abslope/saem.hpp"
#include "abslope/types.hpp"

namespace abslope {

namespace detail {

struct ObservedConditional {
    std::vector<Index> missing;
    VectorXd mean;
    Eigen::LLT<MatrixXd> chol;  // of the conditional covariance
};

/// Gaussian conditional of the missing block given the observed block under
/// N(mu, Sigma); x_row is in model (standardized) scale.
template <typename MaskRow>
inline ObservedConditional condition_on_observed(const VectorXd& x_row, const MaskRow& miss,
                                                 const VectorXd& mu, const MatrixXd& Sigma) {
    ObservedConditional out;
    std::vector<Index> observed;
    for (Index j = 0; j < x_row.size(); ++j) {
        (miss[j] ? out.missing : observed).push_back(j);
    }
    const Index m = static_cast<Index>(out.missing.size());
    const Index o = static_cast<Index>(observed.size());

    if (o == 0) {
        out.mean = mu;
        MatrixXd cov = Sigma;
        out.chol = robust_llt(cov, "predict conditional");
        return out;
    }

    MatrixXd S_oo(o, o), S_mo(m, o), S_mm(m, m);
    VectorXd dev(o);
    for (Index a = 0; a < o; ++a) {
        dev[a] = x_row[observed[static_cast<std::size_t>(a)]] - mu[observed[static_cast<std::size_t>(a)]];
        for (Index b = 0; b < o; ++b) {
            S_oo(a, b) = Sigma(observed[static_cast<std::size_t>(a)], observed[static_cast<std::size_t>(b)]);
        }
    }
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b < o; ++b) {
            S_mo(a, b) = Sigma(out.missing[static_cast<std::size_t>(a)], observed[static_cast<std::size_t>(b)]);
        }
        for (Index b = 0; b < m; ++b) {
            S_mm(a, b) = Sigma(out.missing[static_cast<std::size_t>(a)], out.missing[static_cast<std::size_t>(b)]);
        }
    }

    const Eigen::LLT<MatrixXd> oo = robust_llt(S_oo, "predict conditional (observed block)");
    const MatrixXd gain = oo.solve(S_mo.transpose()).transpose();  // S_mo S_oo^{-1}
    out.mean.resize(m);
    for (Index a = 0; a < m; ++a) out.mean[a] = mu[out.missing[static_cast<std::size_t>(a)]];
    out.mean += gain * dev;
    MatrixXd cov = S_mm - gain * S_mo.transpose();
    cov = 0.5 * (cov + cov.transpose());
    out.chol = robust_llt(cov, "predict conditional (Schur complement)");
    return out;
}

} // namespace detail

/// Prediction for one row with possibly missing covariates: averages the
/// linear predictor over S conditional draws of the missing block and adds
/// the stored response mean. Complete rows bypass sampling. x_raw is in the
/// original column scale; masked coordinates are ignored.
template <typename MaskRow>
inline double predict_row(const VectorXd& x_raw, const MaskRow& miss, const FitResult& fit,
                          int S, std::uint64_t seed) {
    if (S < 1) throw std::domain_error("predict_row: S must be at least 1");
    const Index p = x_raw.size();
    if (p != fit.beta.size()) throw std::invalid_argument("predict_row: row width does not match model");

    // Standardize the observed coordinates with the stored scaling.
    const double sqrt_n = std::sqrt(static_cast<double>(fit.n_train));
    VectorXd x_std = VectorXd::Zero(p);
    bool any_missing = false;
    for (Index j = 0; j < p; ++j) {
        if (miss[j]) {
            any_missing = true;
        } else {
            x_std[j] = (x_raw[j] - fit.scaling.m[j]) / (sqrt_n * fit.scaling.s[j]);
        }
    }

    if (!any_missing) {
        return x_std.dot(fit.beta) + fit.scaling.y_mean;
    }

    const auto cond = detail::condition_on_observed(x_std, miss, fit.mu, fit.Sigma);
    double observed_part = fit.scaling.y_mean;
    for (Index j = 0; j < p; ++j) {
        if (!miss[j]) observed_part += x_std[j] * fit.beta[j];
    }
    VectorXd beta_mis(static_cast<Index>(cond.missing.size()));
    for (std::size_t a = 0; a < cond.missing.size(); ++a) {
        beta_mis[static_cast<Index>(a)] = fit.beta[cond.missing[a]];
    }
    if (beta_mis.isZero(0.0)) {
        return observed_part;  // draws cannot contribute
    }

    Rng rng(seed);
    const Index m = beta_mis.size();
    const MatrixXd L = cond.chol.matrixL();
    double total = 0.0;
    VectorXd w(m);
    for (int s = 0; s < S; ++s) {
        for (Index i = 0; i < m; ++i) w[i] = rng.normal();
        total += (cond.mean + L * w).dot(beta_mis);
    }
    return observed_part + total / static_cast<double>(S);
}

/// Maps predict_row over a matrix of rows; each row draws from its own
/// derived sub-seed.
inline VectorXd predict_batch(const MatrixXd& rows, const MaskMatrix& miss, const FitResult& fit,
                              int S, std::uint64_t seed) {
    if (rows.rows() != miss.rows() || rows.cols() != miss.cols()) {
        throw std::invalid_argument("predict_batch: rows and mask dimensions differ");
    }
    VectorXd out(rows.rows());
    for (Index i = 0; i < rows.rows(); ++i) {
        out[i] = predict_row(VectorXd(rows.row(i)), miss.row(i), fit, S,
                             derive_seed(seed, static_cast<std::uint64_t>(i)));
    }
    return out;
}

/// Relative l2 prediction error ||yhat - y||^2 / ||y||^2.
inline double relative_l2_error(const VectorXd& y_hat, const VectorXd& y) {
    if (y_hat.size() != y.size()) throw std::invalid_argument("relative_l2_error: length mismatch");
    const double denom = y.squaredNorm();
    if (!(denom > 0.0)) throw std::domain_error("relative_l2_error: reference norm is zero");
    return (y_hat - y).squaredNorm() / denom;
}

} // namespace abslope
