#pragma once

// Core data model: dataset with explicit missingness mask, penalty sequence,
// model state carried across iterations, and the shared rank/weight helpers.

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "abslope/math.hpp"

namespace abslope {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Raised when a covariate column cannot be standardized (fully missing,
/// fewer than two observed values, or zero variance).
class UnusableColumnError : public std::runtime_error {
public:
    UnusableColumnError(Index column, const std::string& reason)
        : std::runtime_error("column " + std::to_string(column) + " is unusable: " + reason),
          column_(column) {}
    Index column() const { return column_; }

private:
    Index column_;
};

class NumericalDegeneracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Response plus covariates with an explicit mask; masked entries of X are
/// undefined (stored as NaN) and must never enter arithmetic.
struct Dataset {
    VectorXd y;
    MatrixXd X;
    MaskMatrix mask;     // true marks a missing cell
    bool centered = false;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    void validate() const {
        if (y.size() != X.rows()) {
            throw std::invalid_argument("Dataset: y length must equal the number of rows of X");
        }
        if (mask.rows() != X.rows() || mask.cols() != X.cols()) {
            throw std::invalid_argument("Dataset: mask and X must have identical dimensions");
        }
        if (!y.allFinite()) {
            throw std::invalid_argument("Dataset: response contains non-finite entries");
        }
        for (Index j = 0; j < X.cols(); ++j) {
            for (Index i = 0; i < X.rows(); ++i) {
                if (!mask(i, j) && !std::isfinite(X(i, j))) {
                    throw std::invalid_argument("Dataset: observed entry (" + std::to_string(i) +
                                                ", " + std::to_string(j) + ") is not finite");
                }
            }
        }
    }
};

/// Non-increasing, nonnegative penalty weights.
struct LambdaSequence {
    VectorXd values;

    Index size() const { return values.size(); }
    double operator[](Index rank) const { return values[rank]; }

    static LambdaSequence from(VectorXd v) {
        if (v.size() == 0) throw std::invalid_argument("LambdaSequence: empty");
        for (Index j = 0; j + 1 < v.size(); ++j) {
            if (v[j] < v[j + 1]) {
                throw std::invalid_argument("LambdaSequence: values must be non-increasing");
            }
        }
        if (v[v.size() - 1] < 0.0) {
            throw std::invalid_argument("LambdaSequence: values must be nonnegative");
        }
        LambdaSequence seq;
        seq.values = std::move(v);
        return seq;
    }
};

/// BH-style sequence lambda_j = Phi^{-1}(1 - j q / (2p)), j = 1..p.
inline LambdaSequence bh_lambda(Index p, double q) {
    if (p < 1) throw std::domain_error("bh_lambda: p must be at least 1");
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("bh_lambda: q must lie in (0, 1)");
    VectorXd v(p);
    for (Index j = 1; j <= p; ++j) {
        v[j - 1] = normal_quantile(1.0 - static_cast<double>(j) * q / (2.0 * static_cast<double>(p)));
    }
    return LambdaSequence::from(std::move(v));
}

/// Descending-magnitude ranks, 0-based: ranks[j] = r means |v_j| is the
/// (r+1)-th largest. Ties break by index ascending so penalties are
/// reproducible.
inline std::vector<Index> magnitude_ranks(const VectorXd& v) {
    std::vector<Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return std::abs(v[a]) > std::abs(v[b]);
    });
    std::vector<Index> ranks(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        ranks[static_cast<std::size_t>(order[r])] = static_cast<Index>(r);
    }
    return ranks;
}

/// Full latent/parameter state carried across SAEM iterations. gamma holds
/// the 0/1 Gibbs draws for the stochastic fit and inclusion probabilities for
/// the deterministic variant.
struct ModelState {
    VectorXd beta;
    double sigma = 1.0;
    VectorXd gamma;
    double c = 1.0;
    double theta = 0.5;
    VectorXd mu;
    MatrixXd Sigma;

    /// Diagonal of the weight matrix: w_j = c*gamma_j + (1 - gamma_j).
    VectorXd weights() const { return VectorXd::Ones(gamma.size()) - (1.0 - c) * gamma; }

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("ModelState: sigma must be positive");
        if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("ModelState: c must lie in (0, 1]");
        if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("ModelState: theta must lie in (0, 1)");
        if (beta.size() != gamma.size() || beta.size() != mu.size() ||
            Sigma.rows() != beta.size() || Sigma.cols() != beta.size()) {
            throw std::invalid_argument("ModelState: inconsistent dimensions");
        }
    }
};

struct Hyperparams {
    double q = 0.1;       // target FDR level for the BH sequence
    double a = 0.0;       // Beta prior on theta
    double b = 0.0;
    int t0 = 20;          // unit-step burn-in length
    int max_iter = 500;
    double tol = 1e-6;    // threshold on ||beta_{t+1} - beta_t||^2

    // Prior mean 2/p on the sparsity level; p <= 2 degenerates that choice,
    // so fall back to a = 1, b = p there.
    static Hyperparams defaults(Index p) {
        Hyperparams h;
        if (p > 2) {
            h.a = 2.0 / static_cast<double>(p);
            h.b = 1.0 - 2.0 / static_cast<double>(p);
        } else {
            h.a = 1.0;
            h.b = static_cast<double>(p);
        }
        return h;
    }

    void validate() const {
        if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("Hyperparams: q must lie in (0, 1)");
        if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("Hyperparams: a and b must be positive");
        if (t0 < 1) throw std::invalid_argument("Hyperparams: t0 must be at least 1");
        if (max_iter < 1) throw std::invalid_argument("Hyperparams: max_iter must be at least 1");
        if (!(tol > 0.0)) throw std::invalid_argument("Hyperparams: tol must be positive");
    }
};

/// Column means/sds of the unscaled imputed matrix plus the response mean,
/// retained so that model-scale coefficients can be mapped back.
struct ScalingInfo {
    VectorXd m;
    VectorXd s;
    double y_mean = 0.0;
};

/// Cholesky with the diagonal-jitter ladder: +1e-10 first, one retry with
/// +1e-8, then a hard error.
inline Eigen::LLT<MatrixXd> robust_llt(const MatrixXd& A, const char* what) {
    MatrixXd work = A;
    work.diagonal().array() += 1e-10;
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return llt;
    work = A;
    work.diagonal().array() += 1e-8;
    llt.compute(work);
    if (llt.info() == Eigen::Success) return llt;
    throw NumericalDegeneracyError(std::string(what) + ": matrix is not positive definite after jitter");
}

} // namespace abslope
